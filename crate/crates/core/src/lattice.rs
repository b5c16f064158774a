//! Configurations on the segment `[-N, N]` for a single copy and for an
//! ordered pair of copies.
//!
//! Sites are addressed by their signed coordinate `x` everywhere in the
//! public API. The 0-based storage offset is private to this module.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which boundary mechanism drives the chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reservoir {
    /// Boundary sites are reset to 1 at rate `rho` and to 0 at rate `1 - rho`.
    Density { rho_plus: f64, rho_minus: f64 },
    /// Births in the right window and deaths in the left window, each at rate `j / 2N`.
    Current,
}

impl Reservoir {
    pub fn is_current(&self) -> bool {
        matches!(self, Reservoir::Current)
    }
}

/// Model parameters. `epsilon = 1/N` is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n: u32,
    pub j: f64,
    pub reservoir: Reservoir,
}

impl ModelParams {
    pub fn current(n: u32, j: f64) -> Self {
        Self {
            n,
            j,
            reservoir: Reservoir::Current,
        }
    }

    pub fn density(n: u32, rho_plus: f64, rho_minus: f64) -> Self {
        Self {
            n,
            j: 1.0,
            reservoir: Reservoir::Density {
                rho_plus,
                rho_minus,
            },
        }
    }

    /// Checks the strict model invariants (`N >= 1`, `j > 0`, `1 >= rho_plus > rho_minus >= 0`).
    ///
    /// The simulators themselves also accept the degenerate limits `j = 0` and
    /// `rho_plus = rho_minus`; only user-facing entry points call this.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("N must be at least 1".to_string());
        }
        if !(self.j.is_finite() && self.j > 0.0) {
            problems.push(format!("j must be positive, got {}", self.j));
        }
        if let Reservoir::Density {
            rho_plus,
            rho_minus,
        } = self.reservoir
        {
            if !(rho_plus <= 1.0 && rho_plus > rho_minus && rho_minus >= 0.0) {
                problems.push(format!(
                    "need 1 >= rho_plus > rho_minus >= 0, got rho_plus={rho_plus} rho_minus={rho_minus}"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems))
        }
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / f64::from(self.n)
    }

    /// Rate `j / 2N` of every current-reservoir boundary clock.
    pub fn boundary_rate(&self) -> f64 {
        self.j * self.epsilon() / 2.0
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.n)
    }
}

/// The segment `[-N, N]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lattice {
    n: u32,
}

impl Lattice {
    pub fn new(n: u32) -> Self {
        Self { n }
    }

    pub fn half_width(&self) -> u32 {
        self.n
    }

    pub fn n(&self) -> i32 {
        self.n as i32
    }

    pub fn len(&self) -> usize {
        2 * self.n as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: i32) -> bool {
        x.abs() <= self.n()
    }

    pub fn sites(&self) -> impl DoubleEndedIterator<Item = i32> {
        -self.n()..=self.n()
    }

    /// Bonds `(x, x+1)` are labelled by their left end, `x` in `[-N, N-1]`.
    pub fn bonds(&self) -> impl Iterator<Item = i32> {
        -self.n()..self.n()
    }

    #[inline]
    pub fn index(&self, x: i32) -> usize {
        debug_assert!(self.contains(x), "site {x} outside [-{0}, {0}]", self.n);
        (x + self.n()) as usize
    }

    #[inline]
    pub fn site(&self, index: usize) -> i32 {
        index as i32 - self.n()
    }
}

/// Occupation word of a single copy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    lattice: Lattice,
    occupancy: Vec<u8>,
}

impl Configuration {
    pub fn empty(n: u32) -> Self {
        Self::filled(n, 0)
    }

    pub fn full(n: u32) -> Self {
        Self::filled(n, 1)
    }

    fn filled(n: u32, v: u8) -> Self {
        let lattice = Lattice::new(n);
        Self {
            lattice,
            occupancy: vec![v; lattice.len()],
        }
    }

    /// Builds from occupations listed from site `-N` to `N`. The length must be odd.
    pub fn from_occupancy(occupancy: Vec<u8>) -> Result<Self> {
        if occupancy.len() % 2 == 0 {
            return Err(Error::Parse(format!(
                "configuration length {} is not of the form 2N+1",
                occupancy.len()
            )));
        }
        if let Some(bad) = occupancy.iter().find(|&&v| v > 1) {
            return Err(Error::Parse(format!("occupation value {bad} is not 0/1")));
        }
        let n = (occupancy.len() / 2) as u32;
        Ok(Self {
            lattice: Lattice::new(n),
            occupancy,
        })
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn n(&self) -> u32 {
        self.lattice.half_width()
    }

    #[inline]
    pub fn get(&self, x: i32) -> u8 {
        self.occupancy[self.lattice.index(x)]
    }

    #[inline]
    pub fn set(&mut self, x: i32, v: u8) {
        let i = self.lattice.index(x);
        self.occupancy[i] = v;
    }

    pub fn occupancy(&self) -> &[u8] {
        &self.occupancy
    }

    pub fn particle_count(&self) -> usize {
        self.occupancy.iter().map(|&v| v as usize).sum()
    }

    pub fn swap(&mut self, x: i32) {
        let i = self.lattice.index(x);
        self.occupancy.swap(i, i + 1);
    }

    /// Map `x -> -x` combined with particle-hole exchange: `out(x) = 1 - in(-x)`.
    pub fn reflect_flip(&self) -> Self {
        let occupancy = self.occupancy.iter().rev().map(|&v| 1 - v).collect();
        Self {
            lattice: self.lattice,
            occupancy,
        }
    }

    /// Bit-packed index, bit `i` holding the site at storage offset `i`.
    pub fn to_index(&self) -> usize {
        self.occupancy
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &v)| acc | ((v as usize) << i))
    }

    pub fn from_index(n: u32, index: usize) -> Self {
        let lattice = Lattice::new(n);
        let occupancy = (0..lattice.len()).map(|i| ((index >> i) & 1) as u8).collect();
        Self { lattice, occupancy }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &v in &self.occupancy {
            f.write_str(if v == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Configuration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let occupancy = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Parse(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::from_occupancy(occupancy)
    }
}

/// State of one site of the coupled pair `(eta1, eta2)` with `eta1 >= eta2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SiteState {
    /// Discrepancy: `(1, 0)`.
    Ne,
    /// Both copies occupied: `(1, 1)`.
    One,
    /// Both copies empty: `(0, 0)`.
    Zero,
}

impl SiteState {
    pub const ALL: [SiteState; 3] = [SiteState::Ne, SiteState::One, SiteState::Zero];

    pub fn upper(self) -> u8 {
        match self {
            SiteState::Ne | SiteState::One => 1,
            SiteState::Zero => 0,
        }
    }

    pub fn lower(self) -> u8 {
        match self {
            SiteState::One => 1,
            SiteState::Ne | SiteState::Zero => 0,
        }
    }

    /// Indicator triple `(eta_ne, eta_1, eta_0)`.
    pub fn indicators(self) -> (u8, u8, u8) {
        match self {
            SiteState::Ne => (1, 0, 0),
            SiteState::One => (0, 1, 0),
            SiteState::Zero => (0, 0, 1),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            SiteState::Ne => 'x',
            SiteState::One => '1',
            SiteState::Zero => '0',
        }
    }

    fn digit(self) -> usize {
        match self {
            SiteState::Ne => 0,
            SiteState::One => 1,
            SiteState::Zero => 2,
        }
    }
}

/// Coupled configuration in the three-letter alphabet; ordering of the two
/// copies is structural.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoupledConfiguration {
    lattice: Lattice,
    states: Vec<SiteState>,
}

impl CoupledConfiguration {
    /// Every site a discrepancy: upper copy full, lower copy empty.
    pub fn all_discrepancies(n: u32) -> Self {
        let lattice = Lattice::new(n);
        Self {
            lattice,
            states: vec![SiteState::Ne; lattice.len()],
        }
    }

    pub fn from_states(states: Vec<SiteState>) -> Result<Self> {
        if states.len() % 2 == 0 {
            return Err(Error::Parse(format!(
                "configuration length {} is not of the form 2N+1",
                states.len()
            )));
        }
        let n = (states.len() / 2) as u32;
        Ok(Self {
            lattice: Lattice::new(n),
            states,
        })
    }

    /// Combines an ordered pair into the three-state encoding.
    pub fn compose(upper: &Configuration, lower: &Configuration) -> Result<Self> {
        if upper.lattice() != lower.lattice() {
            return Err(Error::LengthMismatch {
                left: upper.lattice().len(),
                right: lower.lattice().len(),
            });
        }
        let lattice = upper.lattice();
        let states = lattice
            .sites()
            .map(|x| match (upper.get(x), lower.get(x)) {
                (1, 0) => Ok(SiteState::Ne),
                (1, 1) => Ok(SiteState::One),
                (0, 0) => Ok(SiteState::Zero),
                _ => Err(Error::OrderViolation { site: x }),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { lattice, states })
    }

    pub fn decompose(&self) -> (Configuration, Configuration) {
        let upper = self.states.iter().map(|s| s.upper()).collect();
        let lower = self.states.iter().map(|s| s.lower()).collect();
        (
            Configuration {
                lattice: self.lattice,
                occupancy: upper,
            },
            Configuration {
                lattice: self.lattice,
                occupancy: lower,
            },
        )
    }

    pub fn upper(&self) -> Configuration {
        self.decompose().0
    }

    pub fn lower(&self) -> Configuration {
        self.decompose().1
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn n(&self) -> u32 {
        self.lattice.half_width()
    }

    #[inline]
    pub fn get(&self, x: i32) -> SiteState {
        self.states[self.lattice.index(x)]
    }

    #[inline]
    pub fn set(&mut self, x: i32, s: SiteState) {
        let i = self.lattice.index(x);
        self.states[i] = s;
    }

    pub fn states(&self) -> &[SiteState] {
        &self.states
    }

    pub fn swap(&mut self, x: i32) {
        let i = self.lattice.index(x);
        self.states.swap(i, i + 1);
    }

    /// Number of sites in each state.
    pub fn counts(&self) -> Counts {
        let mut c = Counts::default();
        for s in &self.states {
            match s {
                SiteState::Ne => c.ne += 1,
                SiteState::One => c.one += 1,
                SiteState::Zero => c.zero += 1,
            }
        }
        c
    }

    pub fn discrepancy_count(&self) -> usize {
        self.states.iter().filter(|&&s| s == SiteState::Ne).count()
    }

    pub fn discrepancy_sites(&self) -> impl Iterator<Item = i32> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == SiteState::Ne)
            .map(|(i, _)| self.lattice.site(i))
    }

    /// Base-3 index with digit `i` holding the site at storage offset `i`.
    pub fn to_index(&self) -> usize {
        self.states
            .iter()
            .rev()
            .fold(0, |acc, s| acc * 3 + s.digit())
    }

    pub fn from_index(n: u32, mut index: usize) -> Self {
        let lattice = Lattice::new(n);
        let states = (0..lattice.len())
            .map(|_| {
                let d = index % 3;
                index /= 3;
                SiteState::ALL[d]
            })
            .collect();
        Self { lattice, states }
    }
}

impl fmt::Display for CoupledConfiguration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.states {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for CoupledConfiguration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let states = s
            .trim()
            .chars()
            .map(|c| match c {
                'x' => Ok(SiteState::Ne),
                '1' => Ok(SiteState::One),
                '0' => Ok(SiteState::Zero),
                other => Err(Error::Parse(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_states(states)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub ne: usize,
    pub one: usize,
    pub zero: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.ne + self.one + self.zero
    }
}
