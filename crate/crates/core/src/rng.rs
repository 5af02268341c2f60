//! Counter-based random streams.
//!
//! Values come from Philox4x32-10 keyed by the 64-bit seed, with the 128-bit
//! counter split into `(stream_id, block_index)`. A value is therefore a pure
//! function of `(seed, stream_id, draw_index)`; no generator state is shared.
//! Child streams (per path, per step, per noise component, per shard) are
//! obtained with [`RngStreamKey::derive`].

use rand::RngCore;
use serde::{Deserialize, Serialize};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = a as u64 * b as u64;
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
pub fn philox4x32_10(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
        ctr = [hi1 ^ ctr[1] ^ k[0], lo1, hi0 ^ ctr[3] ^ k[1], lo0];
    }
    ctr
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStreamKey {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStreamKey {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStreamKey { seed, stream_id }
    }

    /// Child stream `(self.stream_id, index)`, hashed into a fresh stream id.
    pub fn derive(self, index: u64) -> Self {
        let h = splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x6A09_E667_F3BC_C909)));
        RngStreamKey {
            seed: self.seed,
            stream_id: h,
        }
    }

    pub fn stream(self) -> CounterRng {
        CounterRng::new(self)
    }
}

/// Sequential reader over one counter-based stream.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: [u32; 2],
    stream: [u32; 2],
    block: u64,
    buf: [u32; 4],
    pos: usize,
}

impl CounterRng {
    pub fn new(key: RngStreamKey) -> Self {
        CounterRng {
            key: [key.seed as u32, (key.seed >> 32) as u32],
            stream: [key.stream_id as u32, (key.stream_id >> 32) as u32],
            block: 0,
            buf: [0; 4],
            pos: 4,
        }
    }

    /// Value number `draw_index` (in 32-bit words) of the stream, without
    /// touching the reader position.
    pub fn word_at(&self, draw_index: u64) -> u32 {
        let block = draw_index / 4;
        let out = self.block_output(block);
        out[(draw_index % 4) as usize]
    }

    fn block_output(&self, block: u64) -> [u32; 4] {
        philox4x32_10(
            [self.stream[0], self.stream[1], block as u32, (block >> 32) as u32],
            self.key,
        )
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn open01(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        if self.pos == 4 {
            self.buf = self.block_output(self.block);
            self.block += 1;
            self.pos = 0;
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let lo = self.next_u32() as u64;
        let hi = self.next_u32() as u64;
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let w = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Known-answer vectors from the Random123 distribution (kat_vectors).
    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn stream_is_stateless() {
        let key = RngStreamKey::new(42, 7);
        let mut rng = key.stream();
        let words: Vec<u32> = (0..11).map(|_| rng.next_u32()).collect();
        let fresh = key.stream();
        for (i, w) in words.iter().enumerate() {
            assert_eq!(*w, fresh.word_at(i as u64));
        }
    }

    #[test]
    fn derived_streams_differ() {
        let key = RngStreamKey::new(1, 0);
        let a = key.derive(0).stream().next_u64();
        let b = key.derive(1).stream().next_u64();
        let c = RngStreamKey::new(2, 0).derive(0).stream().next_u64();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(key.derive(3), key.derive(3));
    }

    #[test]
    fn uniform_moments() {
        let mut rng = RngStreamKey::new(9, 9).stream();
        let n = 200_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let u = rng.open01();
            assert!(u > 0.0 && u < 1.0);
            s += u;
            s2 += u * u;
        }
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        // se(mean) = sqrt(1/12 / n) ≈ 6.5e-4
        assert!((mean - 0.5).abs() < 4.0 * 6.5e-4);
        assert!((var - 1.0 / 12.0).abs() < 2e-3);
    }

    #[test]
    fn adjacent_streams_uncorrelated() {
        let base = RngStreamKey::new(3, 11);
        let n = 100_000;
        let mut acc = 0.0;
        for i in 0..n {
            let a = base.derive(i).derive(0).stream().open01() - 0.5;
            let b = base.derive(i).derive(1).stream().open01() - 0.5;
            acc += a * b;
        }
        // correlation se ≈ 1/sqrt(n)
        let corr = acc / n as f64 * 12.0;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }
}
