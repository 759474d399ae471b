//! Cross-module properties on randomized inputs: the sumset and
//! exhaustive decodability routes agree witness-for-witness, designed
//! codes survive the brute-force oracle, interference sumsets respect
//! the cardinality lower bound, equivalence transforms compose and
//! invert cleanly, transferred codebooks preserve decodability, and
//! searched designs survive layered round-trips.

use std::collections::BTreeSet;

use ifc_core::apcodes::{ap_decode, ap_design};
use ifc_core::ddifc::{
    efficiency_unchecked, interference_set, is_decodable, is_decodable_exhaustive, minkowski_sum,
    scale_set, ChannelMatrix, Codebook, DecodeTable,
};
use ifc_core::equiv::{
    apply_transform, class_search, invert_transform, transfer_code, EquivalenceTransform,
    SearchBounds,
};
use ifc_core::exactmath::{BigInt, Rational};
use ifc_core::layered::{build_layered_transferred, LayeredDecoder};
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng_for(tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x9E3779B9 ^ tag)
}

/// Random square matrix with positive diagonal and, for K >= 2, at
/// least one nonzero off-diagonal entry per row. Off-diagonal entries
/// are zero about a third of the time so the gcd paths that treat
/// absent interferers get exercised.
fn random_connected_matrix(rng: &mut ChaCha8Rng, k: usize, max_entry: i64) -> ChannelMatrix {
    let mut rows = vec![vec![BigInt::zero(); k]; k];
    for i in 0..k {
        for j in 0..k {
            rows[i][j] = if i == j {
                BigInt::from(rng.gen_range(1..=max_entry))
            } else if rng.gen_range(0..3) == 0 {
                BigInt::zero()
            } else {
                BigInt::from(rng.gen_range(1..=max_entry))
            };
        }
        if k > 1 && (0..k).all(|j| j == i || rows[i][j].is_zero()) {
            let mut j = rng.gen_range(0..k);
            while j == i {
                j = rng.gen_range(0..k);
            }
            rows[i][j] = BigInt::from(rng.gen_range(1..=max_entry));
        }
    }
    ChannelMatrix::new(rows).expect("construction keeps the diagonal positive")
}

/// Random codebook of sets that all contain zero.
fn random_codebook(rng: &mut ChaCha8Rng, k: usize, max_size: usize, max_val: i64) -> Codebook {
    let sets = (0..k)
        .map(|_| {
            let size = rng.gen_range(1..=max_size);
            let mut set: BTreeSet<BigInt> = [BigInt::zero()].into_iter().collect();
            while set.len() < size {
                set.insert(BigInt::from(rng.gen_range(1..=max_val)));
            }
            set
        })
        .collect();
    Codebook::new(sets).expect("sets contain zero")
}

fn receiver_output(h: &ChannelMatrix, x: &[BigInt], i: usize) -> BigInt {
    (0..h.k()).map(|j| h.entry(i, j) * &x[j]).sum()
}

#[test]
fn decodability_routes_agree_on_random_codebooks() {
    let mut rng = rng_for(1);
    let mut disagreements_possible = 0;
    for _ in 0..250 {
        let k = rng.gen_range(2..=4);
        let h = random_connected_matrix(&mut rng, k, 8);
        let c = random_codebook(&mut rng, k, 4, 8);
        let fast = is_decodable(&h, &c).unwrap();
        let slow = is_decodable_exhaustive(&h, &c).unwrap();
        assert_eq!(
            fast.decodable, slow.decodable,
            "route disagreement on H={h:?} C={c:?}"
        );
        if !fast.decodable {
            disagreements_possible += 1;
            for report in [&fast, &slow] {
                let w = report.witness.as_ref().expect("failing report carries a witness");
                assert_ne!(w.x1[w.receiver], w.x2[w.receiver]);
                for (j, (a, b)) in w.x1.iter().zip(&w.x2).enumerate() {
                    assert!(c.set(j).contains(a) && c.set(j).contains(b));
                }
                assert_eq!(receiver_output(&h, &w.x1, w.receiver), w.y);
                assert_eq!(receiver_output(&h, &w.x2, w.receiver), w.y);
            }
            assert_eq!(fast.witness, slow.witness, "witness enumeration order differs");
        }
    }
    assert!(disagreements_possible > 20, "sample too easy to be informative");
}

#[test]
fn designed_codes_pass_brute_force_oracle_and_table_decode() {
    let mut rng = rng_for(2);
    for _ in 0..120 {
        let k = rng.gen_range(2..=4);
        let h = random_connected_matrix(&mut rng, k, 30);
        let code = ap_design(&h).expect("connected matrices have no isolated rows");
        assert!(code.oracle_verified());
        let c = code.codebook();
        let oracle = is_decodable_exhaustive(&h, c).unwrap();
        assert!(oracle.decodable, "designed code fails the oracle on H={h:?}");

        for i in 0..k {
            let table = DecodeTable::build(&h, c, i).unwrap();
            let own = scale_set(h.entry(i, i), c.set(i));
            let outputs = minkowski_sum(&own, &interference_set(&h, c, i));
            assert_eq!(table.len(), outputs.len());
            for y in &outputs {
                let via_table = table.decode(y).unwrap();
                let via_formula = ap_decode(&h, i, y).unwrap();
                assert_eq!(via_table, via_formula, "decoder mismatch at receiver {i}, y={y}");
            }
        }
    }
}

#[test]
fn interference_sets_respect_cardinality_lower_bound() {
    let mut rng = rng_for(3);
    let mut checked = 0;
    for _ in 0..200 {
        let k = rng.gen_range(2..=4);
        let h = random_connected_matrix(&mut rng, k, 10);
        let c = match rng.gen_range(0..2) {
            0 => ap_design(&h).unwrap().codebook().clone(),
            _ => random_codebook(&mut rng, k, 4, 10),
        };
        for i in 0..k {
            let s = interference_set(&h, &c, i);
            let scaled_sum: usize = (0..k)
                .filter(|&j| j != i)
                .map(|j| if h.entry(i, j).is_zero() { 1 } else { c.set(j).len() })
                .sum();
            assert!(
                s.len() + k >= scaled_sum + 2,
                "sumset bound fails at receiver {i}: |S|={}, sizes sum {scaled_sum}, K={k}",
                s.len()
            );
            if (0..k).all(|j| j == i || !h.entry(i, j).is_zero()) {
                let plain_sum: usize = (0..k).filter(|&j| j != i).map(|j| c.set(j).len()).sum();
                assert!(s.len() + k >= plain_sum + 2);
                checked += 1;
            }
        }
    }
    assert!(checked > 100, "too few all-nonzero rows sampled");
}

/// Divisors of a small positive integer, for picking valid row factors.
fn divisors(n: u64) -> Vec<u64> {
    (1..=n).filter(|d| n % d == 0).collect()
}

/// A random transform that keeps `h` integral: random column factors,
/// then a random divisor of each resulting row gcd.
fn random_valid_transform(rng: &mut ChaCha8Rng, h: &ChannelMatrix) -> EquivalenceTransform {
    let k = h.k();
    let r: Vec<BigInt> = (0..k).map(|_| BigInt::from(rng.gen_range(1..=4))).collect();
    let d = (0..k)
        .map(|i| {
            let gcd = (0..k)
                .map(|j| h.entry(i, j) * &r[j])
                .fold(BigInt::zero(), |acc, v| acc.gcd(&v));
            let gcd = gcd.to_u64().expect("entries stay small");
            let choices = divisors(gcd.max(1));
            Rational::from_integer(BigInt::from(choices[rng.gen_range(0..choices.len())]))
        })
        .collect();
    EquivalenceTransform::new(r, d)
}

#[test]
fn transforms_compose_invert_and_fix_identity() {
    let mut rng = rng_for(4);
    for _ in 0..100 {
        let k = rng.gen_range(2..=4);
        let h = random_connected_matrix(&mut rng, k, 12);

        let identity = EquivalenceTransform::identity(k);
        assert_eq!(apply_transform(&h, &identity).unwrap(), h);

        let t1 = random_valid_transform(&mut rng, &h);
        let h1 = apply_transform(&h, &t1).unwrap();
        assert_eq!(apply_transform(&h1, &invert_transform(&t1)).unwrap(), h);

        let t2 = random_valid_transform(&mut rng, &h1);
        let h2 = apply_transform(&h1, &t2).unwrap();
        assert_eq!(apply_transform(&h, &t1.compose(&t2)).unwrap(), h2);
    }
}

#[test]
fn transferred_codebooks_preserve_decodability_and_outputs() {
    let mut rng = rng_for(5);
    let mut decodable_seen = 0;
    for _ in 0..100 {
        let k = rng.gen_range(2..=4);
        let h = random_connected_matrix(&mut rng, k, 8);
        let t = random_valid_transform(&mut rng, &h);
        let h_target = apply_transform(&h, &t).unwrap();

        let c_target = match rng.gen_range(0..2) {
            0 => match ap_design(&h_target) {
                Ok(code) => code.codebook().clone(),
                Err(_) => continue,
            },
            _ => random_codebook(&mut rng, k, 3, 6),
        };
        let c_source = transfer_code(&c_target, &t);

        let on_target = is_decodable(&h_target, &c_target).unwrap().decodable;
        let on_source = is_decodable(&h, &c_source).unwrap().decodable;
        assert_eq!(on_target, on_source, "transfer changed decodability");
        decodable_seen += usize::from(on_target);

        // Outputs of the scaled codebook descale onto target outputs.
        for _ in 0..20 {
            let x_target: Vec<BigInt> = (0..k)
                .map(|j| {
                    let set: Vec<&BigInt> = c_target.set(j).iter().collect();
                    set[rng.gen_range(0..set.len())].clone()
                })
                .collect();
            let x_source: Vec<BigInt> =
                x_target.iter().zip(t.r()).map(|(x, r)| x * r).collect();
            for i in 0..k {
                let y_source = receiver_output(&h, &x_source, i);
                let y_target = receiver_output(&h_target, &x_target, i);
                assert_eq!(t.descale_output(i, &y_source).unwrap(), y_target);
            }
        }
    }
    assert!(decodable_seen > 30, "too few decodable transfers sampled");
}

#[test]
fn searched_designs_survive_layered_round_trips() {
    let mut rng = rng_for(6);
    let bounds = SearchBounds { r_max: 2, ..SearchBounds::default() };
    for _ in 0..25 {
        let h = random_connected_matrix(&mut rng, 3, 6);
        let found = class_search(&h, &bounds).unwrap();
        let c = found.code.codebook();
        let w = efficiency_unchecked(&found.best_matrix, c).w_max;

        let layered =
            build_layered_transferred(&h, &found.best_matrix, c, &found.transform, &w, 2)
                .unwrap();
        let decoder = LayeredDecoder::new(layered).unwrap();
        let code = decoder.code();

        let wire: Vec<Vec<BigInt>> = (0..3)
            .map(|j| c.set(j).iter().map(|m| m * code.scale(j)).collect())
            .collect();
        for _ in 0..40 {
            let picks: Vec<Vec<BigInt>> = (0..3)
                .map(|j| {
                    (0..2)
                        .map(|_| wire[j][rng.gen_range(0..wire[j].len())].clone())
                        .collect()
                })
                .collect();
            let xs: Vec<BigInt> = (0..3).map(|j| code.encode_user(j, &picks[j])).collect();
            for i in 0..3 {
                let y = receiver_output(&h, &xs, i);
                let digits = decoder.decode(i, &y).unwrap();
                assert_eq!(digits, picks[i], "round trip failed at receiver {i}");
            }
        }
    }
}
