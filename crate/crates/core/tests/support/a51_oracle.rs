//! Naive A5/1 written straight from the register description: every
//! register is a vector of bits, index 0 being the most recently shifted-in
//! bit. Shares no code with the library implementation.

struct Register {
    bits: Vec<bool>,
    taps: &'static [usize],
    clocking_bit: usize,
}

impl Register {
    fn new(len: usize, taps: &'static [usize], clocking_bit: usize) -> Self {
        Self { bits: vec![false; len], taps, clocking_bit }
    }

    fn shift(&mut self) {
        let feedback = self.taps.iter().fold(false, |acc, &t| acc ^ self.bits[t]);
        self.bits.rotate_right(1);
        self.bits[0] = feedback;
    }

    fn mix_in(&mut self, bit: bool) {
        self.bits[0] ^= bit;
    }

    fn clocking(&self) -> bool {
        self.bits[self.clocking_bit]
    }

    fn out(&self) -> bool {
        *self.bits.last().unwrap()
    }
}

fn regs() -> [Register; 3] {
    [
        Register::new(19, &[13, 16, 17, 18], 8),
        Register::new(22, &[20, 21], 10),
        Register::new(23, &[7, 20, 21, 22], 10),
    ]
}

/// First `n_bits` (≤ 228) keystream bits for a key given as eight bytes.
pub fn keystream(key: [u8; 8], frame: u32, n_bits: usize) -> Vec<bool> {
    let mut r = regs();
    let key_bits = (0..64).map(|i| (key[i / 8] >> (i % 8)) & 1 == 1);
    let frame_bits = (0..22).map(|i| (frame >> i) & 1 == 1);
    for bit in key_bits.chain(frame_bits) {
        for reg in r.iter_mut() {
            reg.shift();
            reg.mix_in(bit);
        }
    }
    let step = |r: &mut [Register; 3]| {
        let votes = r.iter().filter(|x| x.clocking()).count();
        let majority = votes >= 2;
        for reg in r.iter_mut() {
            if reg.clocking() == majority {
                reg.shift();
            }
        }
    };
    for _ in 0..100 {
        step(&mut r);
    }
    (0..n_bits)
        .map(|_| {
            step(&mut r);
            r[0].out() ^ r[1].out() ^ r[2].out()
        })
        .collect()
}

/// Unpacks bytes MSB-first, keeping `n` bits.
pub fn bits_of(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect()
}
