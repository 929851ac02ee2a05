use super::MAX_TOY_ROUNDS;

/// Balanced Feistel network over `b`-bit blocks with a rotating key schedule.
///
/// Round `i` (1-based) uses subkey `(rotl_k(K, 7i mod k) mod 2^{b/2}) ^ i`
/// and round function `F(x, s) = rotl_{b/2}(x + s, 3) ^ 5x`, all arithmetic
/// modulo `2^{b/2}`. Cryptographic strength is not a goal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeistelSchedule {
    half_bits: u32,
    rounds: u32,
    subkeys: [u64; MAX_TOY_ROUNDS as usize],
}

impl FeistelSchedule {
    pub fn new(block_bits: u32, key_bits: u32, rounds: u32, key: u64) -> Self {
        let half_bits = block_bits / 2;
        let mask = mask(half_bits);
        let mut subkeys = [0u64; MAX_TOY_ROUNDS as usize];
        for i in 1..=rounds {
            let rotated = rotl(key, (7 * i) % key_bits, key_bits);
            subkeys[(i - 1) as usize] = ((rotated & mask) ^ i as u64) & mask;
        }
        FeistelSchedule { half_bits, rounds, subkeys }
    }

    #[inline]
    fn round_fn(&self, x: u64, s: u64) -> u64 {
        let m = mask(self.half_bits);
        rotl(x.wrapping_add(s) & m, 3 % self.half_bits, self.half_bits) ^ (x.wrapping_mul(5) & m)
    }

    #[inline]
    pub fn encrypt(&self, block: u64) -> u64 {
        let m = mask(self.half_bits);
        let mut l = (block >> self.half_bits) & m;
        let mut r = block & m;
        for s in &self.subkeys[..self.rounds as usize] {
            let next = l ^ self.round_fn(r, *s);
            l = r;
            r = next;
        }
        (l << self.half_bits) | r
    }

    #[inline]
    pub fn decrypt(&self, block: u64) -> u64 {
        let m = mask(self.half_bits);
        // swap, run the rounds with reversed subkeys, swap back
        let mut l = block & m;
        let mut r = (block >> self.half_bits) & m;
        for s in self.subkeys[..self.rounds as usize].iter().rev() {
            let next = l ^ self.round_fn(r, *s);
            l = r;
            r = next;
        }
        (r << self.half_bits) | l
    }
}

#[inline]
fn mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// Rotate left within a `width`-bit word.
#[inline]
fn rotl(x: u64, s: u32, width: u32) -> u64 {
    if width >= 64 {
        return x.rotate_left(s);
    }
    if s == 0 {
        return x;
    }
    ((x << s) | (x >> (width - s))) & mask(width)
}
