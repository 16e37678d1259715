//! Spin-1/2 local operators in the S^z basis `{|up>, |down>}` (index 0 = up).

use num_complex::Complex64;

pub type LocalOp = [[Complex64; 2]; 2];

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub const IDENTITY: LocalOp = [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
pub const SX: LocalOp = [[c(0.0, 0.0), c(0.5, 0.0)], [c(0.5, 0.0), c(0.0, 0.0)]];
pub const SY: LocalOp = [[c(0.0, 0.0), c(0.0, -0.5)], [c(0.0, 0.5), c(0.0, 0.0)]];
pub const SZ: LocalOp = [[c(0.5, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.5, 0.0)]];
/// `S^- = S^x - i S^y`, maps up to down.
pub const S_MINUS: LocalOp = [[c(0.0, 0.0), c(0.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]];
pub const S_PLUS: LocalOp = [[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];

pub type RealOp = [[f64; 2]; 2];

pub const R_IDENTITY: RealOp = [[1.0, 0.0], [0.0, 1.0]];
pub const R_SX: RealOp = [[0.0, 0.5], [0.5, 0.0]];
pub const R_SZ: RealOp = [[0.5, 0.0], [0.0, -0.5]];

/// Splits `op = re + i im` into real matrices; a part is `None` when it
/// vanishes identically.
pub fn split(op: &LocalOp) -> (Option<RealOp>, Option<RealOp>) {
    let re = [[op[0][0].re, op[0][1].re], [op[1][0].re, op[1][1].re]];
    let im = [[op[0][0].im, op[0][1].im], [op[1][0].im, op[1][1].im]];
    let nz = |m: &RealOp| m.iter().flatten().any(|x| *x != 0.0);
    (nz(&re).then_some(re), nz(&im).then_some(im))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lowering_operator_is_sx_minus_i_sy() {
        for r in 0..2 {
            for col in 0..2 {
                let want = SX[r][col] - Complex64::i() * SY[r][col];
                assert_eq!(S_MINUS[r][col], want);
            }
        }
    }

    #[test]
    fn split_parts() {
        let (re, im) = split(&SY);
        assert!(re.is_none());
        assert_eq!(im.unwrap(), [[0.0, -0.5], [0.5, 0.0]]);
        let (re, im) = split(&SX);
        assert_eq!(re.unwrap(), R_SX);
        assert!(im.is_none());
    }
}
