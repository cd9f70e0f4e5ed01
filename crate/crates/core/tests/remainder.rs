//! `R(P, P0) = Ψ(P) − Ψ(P0) + P0 D*_P` vanishes when either nuisance block
//! of `P` is correct.

mod common;

use common::{missing_remainder, survival_remainder, Block};

const DRAWS: usize = 200_000;

fn check(remainder: impl Fn(Block, usize, u64) -> (f64, f64), seed: u64) {
    for block in Block::ALL {
        let (r, se) = remainder(block, DRAWS, seed);
        if block == Block::Neither {
            assert!(r.abs() > 5.0 * se, "{}: R = {r} (se {se})", block.name());
        } else {
            assert!(r.abs() < 3.0 * se, "{}: R = {r} (se {se})", block.name());
        }
    }
}

#[test]
fn missing_remainder_vanishes_when_either_part_is_correct() {
    check(missing_remainder, 11);
}

#[test]
fn survival_remainder_vanishes_when_either_part_is_correct() {
    check(survival_remainder, 12);
}
