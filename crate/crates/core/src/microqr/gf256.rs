//! Arithmetic in GF(2^8) with the QR reducing polynomial x^8 + x^4 + x^3 + x^2 + 1.

const PRIMITIVE: u16 = 0x11d;

struct Tables {
    exp: [u8; 512],
    log: [u8; 256],
}

const fn build_tables() -> Tables {
    let mut exp = [0u8; 512];
    let mut log = [0u8; 256];
    let mut x: u16 = 1;
    let mut i = 0;
    while i < 255 {
        exp[i] = x as u8;
        log[x as usize] = i as u8;
        x <<= 1;
        if x & 0x100 != 0 {
            x ^= PRIMITIVE;
        }
        i += 1;
    }
    // doubled so products of two logs index without a modulo
    while i < 512 {
        exp[i] = exp[i - 255];
        i += 1;
    }
    Tables { exp, log }
}

static TABLES: Tables = build_tables();

#[inline]
pub fn exp(power: usize) -> u8 {
    TABLES.exp[power % 255]
}

/// Discrete log of a nonzero element.
#[inline]
pub fn log(x: u8) -> usize {
    debug_assert!(x != 0, "log of zero");
    TABLES.log[x as usize] as usize
}

#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        return 0;
    }
    TABLES.exp[TABLES.log[a as usize] as usize + TABLES.log[b as usize] as usize]
}

#[inline]
pub fn div(a: u8, b: u8) -> u8 {
    assert!(b != 0, "division by zero in GF(256)");
    if a == 0 {
        return 0;
    }
    TABLES.exp[TABLES.log[a as usize] as usize + 255 - TABLES.log[b as usize] as usize]
}

#[inline]
pub fn inv(a: u8) -> u8 {
    div(1, a)
}

/// Evaluates a polynomial given highest-degree coefficient first.
pub fn poly_eval(poly: &[u8], x: u8) -> u8 {
    poly.iter().fold(0u8, |acc, &c| mul(acc, x) ^ c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slow_mul(mut a: u8, mut b: u8) -> u8 {
        let mut p = 0u8;
        while b != 0 {
            if b & 1 != 0 {
                p ^= a;
            }
            let carry = a & 0x80 != 0;
            a <<= 1;
            if carry {
                a ^= (PRIMITIVE & 0xff) as u8;
            }
            b >>= 1;
        }
        p
    }

    #[test]
    fn table_mul_matches_shift_and_add() {
        for a in 0..=255u8 {
            for b in 0..=255u8 {
                assert_eq!(mul(a, b), slow_mul(a, b), "{a} * {b}");
            }
        }
    }

    #[test]
    fn inverse_is_two_sided() {
        for a in 1..=255u8 {
            assert_eq!(mul(a, inv(a)), 1);
            assert_eq!(div(mul(a, 7), 7), a);
        }
    }

    #[test]
    fn generator_has_order_255() {
        assert_eq!(exp(0), 1);
        assert_eq!(exp(255), 1);
        let distinct: std::collections::HashSet<u8> = (0..255).map(exp).collect();
        assert_eq!(distinct.len(), 255);
    }
}
