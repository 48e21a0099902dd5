//! The `G_{k,l}` lower-bound family and its closed forms.
//!
//! A graph in `G_{k,l}` has `k - l` layers; layer `j` holds `k - (j - 1)`
//! standard edges of transit 1 followed by `j - 1` special edges of a
//! layer-specific transit time. The lower-bound game for parameter `i` uses
//! `k = ceil(e * i)`, `l = i`, `n = k!` players and special transits
//! `n/(k-j+1) - n/(k-j+2) + 2`, which are integral because `k!` is divisible
//! by every integer up to `k`.
//!
//! Everything here is exact: `n` and the transit times overflow 64-bit
//! integers from `i = 4` on.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::equilibria::worst_equilibrium;
use crate::error::{Error, Result};
use crate::loading::load;
use crate::model::{Game, LinearMultigraph, Time};
use crate::optimum::min_horizon;

/// e to 100 decimal places, scaled by 10^100.
const E_SCALED: &str = "27182818284590452353602874713526624977572470936999595749669676277240766303535475945713821785251664274";
const E_SCALE_DIGITS: u32 = 100;

/// e / (e - 1).
pub const E_OVER_E_MINUS_ONE: f64 = 1.581_976_706_869_326_4;

/// Default largest player count that is simulated rather than evaluated
/// analytically.
pub const DEFAULT_SIMULATION_CAP: u64 = 1_000_000;

/// `ceil(e * i)`, exact for every `i` up to 10^6 (and far beyond).
pub fn ceil_e_times(i: u64) -> u64 {
    let scale = BigUint::from(10u32).pow(E_SCALE_DIGITS);
    let e: BigUint = E_SCALED.parse().expect("valid digits");
    let (q, r) = (e * i).div_rem(&scale);
    // The truncated constant is off by less than i * 10^-100; e * i is never
    // that close to an integer for the supported range.
    debug_assert!(!r.is_zero() && r + BigUint::from(i) < scale);
    q.to_u64().expect("fits") + 1
}

fn factorial(k: u64) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, f| acc * f)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LowerBoundParams {
    pub i: u64,
    pub k: u64,
    pub l: u64,
    pub n: BigUint,
    /// Special-edge transit of layers `2..=k-l`.
    pub tau_special: BTreeMap<u64, BigUint>,
}

impl LowerBoundParams {
    pub fn new(i: u64) -> Result<Self> {
        if i == 0 {
            return Err(Error::InvalidParameters("i must be positive".into()));
        }
        let k = ceil_e_times(i);
        let l = i;
        let n = factorial(k);
        let tau_special = (2..=k - l)
            .map(|j| {
                let tau = &n / (k - j + 1) - &n / (k - j + 2) + 2u32;
                (j, tau)
            })
            .collect();
        Ok(Self {
            i,
            k,
            l,
            n,
            tau_special,
        })
    }

    pub fn layers(&self) -> u64 {
        self.k - self.l
    }

    /// Lengths of the edge-disjoint cheapest paths `P_1..P_k`: path `p` uses a
    /// standard edge in layer `j` while `p <= k - j + 1`, a special one after.
    pub fn path_lengths(&self) -> Vec<BigUint> {
        (1..=self.k)
            .map(|p| {
                (1..=self.layers()).fold(BigUint::zero(), |acc, j| {
                    if p + j <= self.k + 1 {
                        acc + 1u32
                    } else {
                        acc + &self.tau_special[&j]
                    }
                })
            })
            .collect()
    }
}

/// Builds `G_{k,l}` with the given special transit for each layer `j >= 2`.
pub fn gen_gkl(k: u64, l: u64, tau: &BTreeMap<u64, Time>) -> Result<LinearMultigraph> {
    if k == 0 || l >= k {
        return Err(Error::InvalidParameters(format!(
            "need 0 <= l < k, got k = {k}, l = {l}"
        )));
    }
    let mut layers = Vec::with_capacity((k - l) as usize);
    for j in 1..=k - l {
        let standard = (k - (j - 1)) as usize;
        let special = (j - 1) as usize;
        let mut layer = vec![1; standard];
        if special > 0 {
            let t = *tau.get(&j).ok_or_else(|| {
                Error::InvalidParameters(format!("missing special transit for layer {j}"))
            })?;
            if t == 0 {
                return Err(Error::InvalidParameters(format!(
                    "special transit of layer {j} must be positive"
                )));
            }
            layer.extend(std::iter::repeat_n(t, special));
        }
        layers.push(layer);
    }
    Ok(LinearMultigraph::new(layers))
}

/// The lower-bound game for parameter `i`, refusing player counts above `cap`.
pub fn gen_lower_bound_game(i: u64, cap: u64) -> Result<Game> {
    let params = LowerBoundParams::new(i)?;
    let too_big = || Error::SimulationCap {
        n: params.n.to_string(),
        cap,
    };
    let n = params
        .n
        .to_u64()
        .filter(|&n| n <= cap)
        .ok_or_else(too_big)?;
    let tau = params
        .tau_special
        .iter()
        .map(|(&j, t)| t.to_u64().map(|t| (j, t)))
        .collect::<Option<BTreeMap<_, _>>>()
        .ok_or_else(too_big)?;
    let graph = gen_gkl(params.k, params.l, &tau)?;
    Ok(Game::new(graph, n as usize))
}

/// Completion time shared by every equilibrium:
/// `(k - l - 1) + n / (l + 1)`.
pub fn eq_completion_closed_form(params: &LowerBoundParams) -> BigUint {
    BigUint::from(params.k - params.l - 1) + &params.n / (params.l + 1)
}

fn ratio(num: impl Into<BigInt>, den: impl Into<BigInt>) -> BigRational {
    BigRational::new(num.into(), den.into())
}

/// `sum_{j=from}^{to} 1/j` by binary splitting, reduced once at the end.
pub fn harmonic_range(from: u64, to: u64) -> BigRational {
    fn split(a: u64, b: u64) -> (BigUint, BigUint) {
        // sum over [a, b)
        if b - a == 1 {
            return (BigUint::one(), BigUint::from(a));
        }
        let mid = a + (b - a) / 2;
        let (p1, q1) = split(a, mid);
        let (p2, q2) = split(mid, b);
        (p1 * &q2 + p2 * &q1, q1 * q2)
    }
    if from == 0 {
        panic!("harmonic terms start at 1");
    }
    if to < from {
        return BigRational::zero();
    }
    let (p, q) = split(from, to + 1);
    ratio(p, q)
}

/// Upper bound on the optimal makespan:
/// `(3k^2 - 4kl - k + l^2 + l) / (2k) + n * ((k-l-1)/((l+1)k) + 1/k - (1/k) sum_{j=l+2}^{k} 1/j)`.
pub fn opt_upper_bound_closed_form(params: &LowerBoundParams) -> BigRational {
    let k = BigInt::from(params.k);
    let l = BigInt::from(params.l);
    let n = BigRational::from_integer(BigInt::from(params.n.clone()));
    let head = ratio(
        BigInt::from(3) * &k * &k - BigInt::from(4) * &k * &l - &k + &l * &l + &l,
        BigInt::from(2) * &k,
    );
    let tail = ratio(&k - &l - 1, (&l + 1) * &k) + ratio(1, k.clone())
        - harmonic_range(params.l + 2, params.k) / BigRational::from_integer(k);
    head + n * tail
}

/// Exact optimal makespan from the path lengths, by bisection on the packet
/// function.
pub fn min_horizon_exact(params: &LowerBoundParams) -> BigUint {
    let mut lengths = params.path_lengths();
    lengths.sort();
    let packets = |c: &BigUint| -> BigUint {
        lengths
            .iter()
            .take_while(|&len| len <= c)
            .map(|len| c - len + 1u32)
            .sum()
    };
    let n = &params.n;
    let mut lo = lengths[0].clone();
    if &packets(&lo) >= n {
        return lo;
    }
    // the shortest path alone delivers n packets by lo + n - 1
    let mut hi = &lo + n;
    while &hi - &lo > BigUint::one() {
        let mid: BigUint = (&lo + &hi) >> 1;
        if &packets(&mid) >= n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Simulate,
    Analytic,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "analytic" => Ok(Mode::Analytic),
            _ => Err(Error::InvalidParameters(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MakespanSource {
    Simulation,
    Formula,
}

impl fmt::Display for MakespanSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MakespanSource::Simulation => "sim",
            MakespanSource::Formula => "formula",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosReport {
    pub params: LowerBoundParams,
    pub eq_makespan: BigUint,
    pub source: MakespanSource,
    pub opt_horizon: BigUint,
    pub ratio: BigRational,
}

/// Equilibrium makespan over optimal makespan for the `i`-th lower-bound game.
pub fn pos_ratio(i: u64, mode: Mode, cap: u64) -> Result<PosReport> {
    let params = LowerBoundParams::new(i)?;
    let (eq_makespan, source, opt_horizon) = match mode {
        Mode::Simulate => {
            let game = gen_lower_bound_game(i, cap)?;
            let state = worst_equilibrium(&game)?;
            let makespan = load(&game, &state)?.makespan;
            (
                BigUint::from(makespan),
                MakespanSource::Simulation,
                BigUint::from(min_horizon(&game)?),
            )
        }
        Mode::Analytic => (
            eq_completion_closed_form(&params),
            MakespanSource::Formula,
            min_horizon_exact(&params),
        ),
    };
    let ratio = ratio(eq_makespan.clone(), opt_horizon.clone());
    Ok(PosReport {
        params,
        eq_makespan,
        source,
        opt_horizon,
        ratio,
    })
}

/// `1 / (1 - ((l+1)/K) * (H_K - H_{l+1}))` with `K = ceil(e * l)`.
pub fn limit_bound(l: u64) -> Result<BigRational> {
    if l == 0 {
        return Err(Error::InvalidParameters("l must be positive".into()));
    }
    let big_k = ceil_e_times(l);
    let inner = ratio(l + 1, big_k) * harmonic_range(l + 2, big_k);
    Ok((BigRational::one() - inner).recip())
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Decimal expansion of a non-negative rational, truncated to `digits` places.
pub fn to_decimal(r: &BigRational, digits: u32) -> String {
    let scale = BigInt::from(10).pow(digits);
    let scaled = (r.numer() * &scale) / r.denom();
    let (int, frac) = scaled.div_rem(&scale);
    if digits == 0 {
        return int.to_string();
    }
    format!(
        "{int}.{:0>width$}",
        frac.to_string(),
        width = digits as usize
    )
}
