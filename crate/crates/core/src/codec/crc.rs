//! CRC-CCITT as used by the synchrophasor frame trailer: polynomial 0x1021,
//! initial value 0xFFFF, no reflection, no final XOR.

const POLY: u16 = 0x1021;

const TABLE: [u16; 256] = build_table();

const fn build_table() -> [u16; 256] {
    let mut table = [0u16; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = (i as u16) << 8;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ POLY
            } else {
                crc << 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

pub fn crc_ccitt(bytes: &[u8]) -> u16 {
    bytes.iter().fold(0xFFFF, |crc, &b| {
        (crc << 8) ^ TABLE[((crc >> 8) as u8 ^ b) as usize]
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_initial_value() {
        assert_eq!(crc_ccitt(&[]), 0xFFFF);
    }

    #[test]
    fn check_value() {
        // CRC-16/CCITT-FALSE check value.
        assert_eq!(crc_ccitt(b"123456789"), 0x29B1);
    }
}
