//! The configuration grid: one integer grid per tunable parameter, with the
//! third and fourth kernel counts only existing for deep enough networks.
//!
//! Every configuration in a space has a canonical index. The order is
//! block-major mixed radix: blocks ascending, then the active kernel counts
//! (`k1` most significant), then `fc1`, `do1`, `fc2`, `do2`, each ascending.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_OUTPUT_CLASSES: u32 = 7;

/// Smallest and largest supported block counts; the 48-pixel input halves
/// once per block.
pub const MIN_BLOCKS: u32 = 2;
pub const MAX_BLOCKS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Block,
    K1,
    K2,
    K3,
    K4,
    Fc1,
    Do1,
    Fc2,
    Do2,
}

impl Param {
    pub const ALL: [Param; 9] = [
        Param::Block,
        Param::K1,
        Param::K2,
        Param::K3,
        Param::K4,
        Param::Fc1,
        Param::Do1,
        Param::Fc2,
        Param::Do2,
    ];

    pub const KERNELS: [Param; 4] = [Param::K1, Param::K2, Param::K3, Param::K4];

    pub fn is_dropout(self) -> bool {
        matches!(self, Param::Do1 | Param::Do2)
    }

    /// Minimum block count for which the parameter exists.
    pub fn active_when(self) -> Option<u32> {
        match self {
            Param::K3 => Some(3),
            Param::K4 => Some(4),
            _ => None,
        }
    }

    pub fn is_active(self, block: u32) -> bool {
        self.active_when().is_none_or(|min| block >= min)
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Param::Block => "Block",
            Param::K1 => "K1",
            Param::K2 => "K2",
            Param::K3 => "K3",
            Param::K4 => "K4",
            Param::Fc1 => "FC1",
            Param::Do1 => "DO1",
            Param::Fc2 => "FC2",
            Param::Do2 => "DO2",
        };
        f.write_str(s)
    }
}

/// Dropout probability in integer hundredths, so grid membership is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Dropout(pub u32);

impl Dropout {
    pub fn hundredths(self) -> u32 {
        self.0
    }

    pub fn probability(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl fmt::Display for Dropout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

/// One parameter's grid `lo, lo+step, ..., hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSpec {
    pub param: Param,
    pub lo: u32,
    pub hi: u32,
    pub step: u32,
    pub active_when: Option<u32>,
}

impl ParamSpec {
    pub fn new(param: Param, lo: u32, hi: u32, step: u32) -> Self {
        ParamSpec {
            param,
            lo,
            hi,
            step,
            active_when: param.active_when(),
        }
    }

    fn check(&self) -> Result<()> {
        if self.step == 0 {
            return Err(Error::InvalidSpec {
                name: self.param.to_string(),
                reason: "step must be positive".into(),
            });
        }
        if self.lo > self.hi {
            return Err(Error::InvalidSpec {
                name: self.param.to_string(),
                reason: format!("lo {} exceeds hi {}", self.lo, self.hi),
            });
        }
        if (self.hi - self.lo) % self.step != 0 {
            return Err(Error::GridMisaligned(self.param.to_string()));
        }
        Ok(())
    }

    pub fn grid_size(&self) -> usize {
        ((self.hi - self.lo) / self.step + 1) as usize
    }

    pub fn values(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.grid_size()).map(move |i| self.value_at(i))
    }

    pub fn value_at(&self, position: usize) -> u32 {
        self.lo + self.step * position as u32
    }

    /// Grid position of `value`, or `None` when it is off-grid.
    pub fn position(&self, value: u32) -> Option<usize> {
        if value < self.lo || value > self.hi || (value - self.lo) % self.step != 0 {
            return None;
        }
        Some(((value - self.lo) / self.step) as usize)
    }

    fn render(&self, value: u32) -> String {
        if self.param.is_dropout() {
            Dropout(value).to_string()
        } else {
            value.to_string()
        }
    }

    fn describe_grid(&self) -> String {
        format!(
            "{}..{} step {}",
            self.render(self.lo),
            self.render(self.hi),
            self.render(self.step)
        )
    }
}

/// One point of the space. Inactive kernel counts are `None`, never zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub block: u32,
    pub k1: u32,
    pub k2: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k3: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k4: Option<u32>,
    pub fc1: u32,
    #[serde(rename = "do1_hundredths")]
    pub do1: Dropout,
    pub fc2: u32,
    #[serde(rename = "do2_hundredths")]
    pub do2: Dropout,
    #[serde(default = "default_output_classes")]
    pub output_classes: u32,
}

fn default_output_classes() -> u32 {
    DEFAULT_OUTPUT_CLASSES
}

impl Configuration {
    /// Raw value of a parameter (dropouts in hundredths), `None` when absent.
    pub fn get(&self, param: Param) -> Option<u32> {
        match param {
            Param::Block => Some(self.block),
            Param::K1 => Some(self.k1),
            Param::K2 => Some(self.k2),
            Param::K3 => self.k3,
            Param::K4 => self.k4,
            Param::Fc1 => Some(self.fc1),
            Param::Do1 => Some(self.do1.0),
            Param::Fc2 => Some(self.fc2),
            Param::Do2 => Some(self.do2.0),
        }
    }

    /// Kernel counts of the blocks, in order. Stops at the first absent one.
    pub fn kernels(&self) -> Vec<u32> {
        let mut out = vec![self.k1, self.k2];
        if let Some(k3) = self.k3 {
            out.push(k3);
            if let Some(k4) = self.k4 {
                out.push(k4);
            }
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<u32>| v.map_or_else(|| "-".to_string(), |v| v.to_string());
        write!(
            f,
            "block={} k=[{} {} {} {}] fc1={} do1={} fc2={} do2={} out={}",
            self.block,
            self.k1,
            self.k2,
            opt(self.k3),
            opt(self.k4),
            self.fc1,
            self.do1,
            self.fc2,
            self.do2,
            self.output_classes
        )
    }
}

/// A reason a configuration is not a member of a space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    OffGrid { spec: ParamSpec, value: u32 },
    MissingActive { param: Param, block: u32 },
    PresentInactive { param: Param, block: u32 },
    OutputClasses { expected: u32, found: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OffGrid { spec, value } => write!(
                f,
                "{}={} off-grid ({})",
                spec.param,
                spec.render(*value),
                spec.describe_grid()
            ),
            Violation::MissingActive { param, block } => {
                write!(f, "{param} missing for block={block}")
            }
            Violation::PresentInactive { param, block } => {
                write!(f, "{param} inactive for block={block}")
            }
            Violation::OutputClasses { expected, found } => {
                write!(f, "output_classes={found}, space requires {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Validity {
    pub violations: Vec<Violation>,
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn reasons(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(self.reasons()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchSpace {
    specs: [ParamSpec; 9],
    output_classes: u32,
}

impl SearchSpace {
    /// The nine-parameter grid used throughout the project.
    pub fn table1() -> Self {
        build_space(
            &[
                ParamSpec::new(Param::Block, 2, 4, 1),
                ParamSpec::new(Param::K1, 6, 16, 2),
                ParamSpec::new(Param::K2, 24, 32, 4),
                ParamSpec::new(Param::K3, 36, 48, 4),
                ParamSpec::new(Param::K4, 52, 64, 4),
                ParamSpec::new(Param::Fc1, 100, 120, 5),
                ParamSpec::new(Param::Do1, 10, 30, 1),
                ParamSpec::new(Param::Fc2, 80, 100, 5),
                ParamSpec::new(Param::Do2, 10, 30, 1),
            ],
            DEFAULT_OUTPUT_CLASSES,
        )
        .expect("built-in grid is well formed")
    }

    pub fn spec(&self, param: Param) -> &ParamSpec {
        &self.specs[param as usize]
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn output_classes(&self) -> u32 {
        self.output_classes
    }

    pub fn block_values(&self) -> impl Iterator<Item = u32> + '_ {
        self.spec(Param::Block).values()
    }

    /// Parameters present in a configuration with `block` blocks, in
    /// canonical digit order (most significant first), excluding `Block`.
    pub fn active_params(block: u32) -> impl Iterator<Item = Param> {
        Param::ALL[1..]
            .iter()
            .copied()
            .filter(move |p| p.is_active(block))
    }

    fn dense_part(&self) -> u64 {
        [Param::Fc1, Param::Do1, Param::Fc2, Param::Do2]
            .iter()
            .map(|&p| self.spec(p).grid_size() as u64)
            .product()
    }

    fn kernel_part(&self, block: u32) -> u64 {
        Param::KERNELS
            .iter()
            .filter(|p| p.is_active(block))
            .map(|&p| self.spec(p).grid_size() as u64)
            .product()
    }

    /// Number of configurations with exactly `block` blocks.
    pub fn block_cardinality(&self, block: u32) -> u64 {
        self.kernel_part(block) * self.dense_part()
    }

    /// Number of distinct valid configurations; K3/K4 count only when active.
    pub fn cardinality(&self) -> u64 {
        self.block_values().map(|b| self.block_cardinality(b)).sum()
    }

    /// Product of every grid size, as if K3/K4 were always present.
    pub fn unconditional_cardinality(&self) -> u64 {
        self.specs.iter().map(|s| s.grid_size() as u64).product()
    }

    pub fn validate(&self, config: &Configuration) -> Validity {
        let mut violations = Vec::new();
        let block = config.block;
        for spec in &self.specs {
            let value = config.get(spec.param);
            let active = spec.param.is_active(block);
            match (value, active) {
                (Some(v), true) => {
                    if spec.position(v).is_none() {
                        violations.push(Violation::OffGrid { spec: *spec, value: v });
                    }
                }
                (Some(_), false) => violations.push(Violation::PresentInactive {
                    param: spec.param,
                    block,
                }),
                (None, true) => violations.push(Violation::MissingActive {
                    param: spec.param,
                    block,
                }),
                (None, false) => {}
            }
        }
        if config.output_classes != self.output_classes {
            violations.push(Violation::OutputClasses {
                expected: self.output_classes,
                found: config.output_classes,
            });
        }
        Validity { violations }
    }

    pub fn config_from_index(&self, index: u64) -> Result<Configuration> {
        let cardinality = self.cardinality();
        if index >= cardinality {
            return Err(Error::IndexOutOfRange { index, cardinality });
        }
        let mut rest = index;
        let mut block = 0;
        for b in self.block_values() {
            let n = self.block_cardinality(b);
            if rest < n {
                block = b;
                break;
            }
            rest -= n;
        }
        let params: Vec<Param> = Self::active_params(block).collect();
        let mut values = [None; 9];
        values[Param::Block as usize] = Some(block);
        for &p in params.iter().rev() {
            let spec = self.spec(p);
            let size = spec.grid_size() as u64;
            values[p as usize] = Some(spec.value_at((rest % size) as usize));
            rest /= size;
        }
        debug_assert_eq!(rest, 0);
        let v = |p: Param| values[p as usize];
        Ok(Configuration {
            block,
            k1: v(Param::K1).unwrap_or_default(),
            k2: v(Param::K2).unwrap_or_default(),
            k3: v(Param::K3),
            k4: v(Param::K4),
            fc1: v(Param::Fc1).unwrap_or_default(),
            do1: Dropout(v(Param::Do1).unwrap_or_default()),
            fc2: v(Param::Fc2).unwrap_or_default(),
            do2: Dropout(v(Param::Do2).unwrap_or_default()),
            output_classes: self.output_classes,
        })
    }

    /// Canonical index of a member configuration.
    pub fn index_of(&self, config: &Configuration) -> Result<u64> {
        self.validate(config).into_result()?;
        let mut offset = 0;
        for b in self.block_values().take_while(|&b| b < config.block) {
            offset += self.block_cardinality(b);
        }
        let mut digits = 0u64;
        for p in Self::active_params(config.block) {
            let spec = self.spec(p);
            let pos = config
                .get(p)
                .and_then(|v| spec.position(v))
                .expect("validated") as u64;
            digits = digits * spec.grid_size() as u64 + pos;
        }
        Ok(offset + digits)
    }

    /// Uniform draw over all configurations (uniform index draw).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let index = rng.random_range(0..self.cardinality());
        self.config_from_index(index).expect("index drawn in range")
    }

    /// Every configuration in canonical order. Only sensible on small spaces.
    pub fn iter(&self) -> impl Iterator<Item = Configuration> + '_ {
        (0..self.cardinality()).map(move |i| self.config_from_index(i).expect("in range"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SpaceFile = serde_json::from_str(text)?;
        file.into_space()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&SpaceFile::from_space(self)).expect("serializable")
    }
}

/// Checks every spec and assembles a space with the conditional rules for
/// K3 (block >= 3) and K4 (block = 4) attached.
pub fn build_space(spec_table: &[ParamSpec], output_classes: u32) -> Result<SearchSpace> {
    let mut slots: [Option<ParamSpec>; 9] = [None; 9];
    for spec in spec_table {
        spec.check()?;
        let slot = &mut slots[spec.param as usize];
        if slot.is_some() {
            return Err(Error::InvalidSpec {
                name: spec.param.to_string(),
                reason: "specified more than once".into(),
            });
        }
        *slot = Some(ParamSpec {
            active_when: spec.param.active_when(),
            ..*spec
        });
    }
    let mut specs = [ParamSpec::new(Param::Block, 0, 0, 1); 9];
    for param in Param::ALL {
        specs[param as usize] = slots[param as usize].ok_or_else(|| Error::MissingSpec(param.to_string()))?;
    }
    let block = specs[Param::Block as usize];
    if block.lo < MIN_BLOCKS || block.hi > MAX_BLOCKS {
        return Err(Error::InvalidSpec {
            name: "Block".into(),
            reason: format!("must lie within {MIN_BLOCKS}..{MAX_BLOCKS}"),
        });
    }
    for spec in &specs {
        if spec.param.is_dropout() && spec.hi >= 100 {
            return Err(Error::InvalidSpec {
                name: spec.param.to_string(),
                reason: "dropout must stay below 1.00".into(),
            });
        }
        if !spec.param.is_dropout() && spec.lo == 0 {
            return Err(Error::InvalidSpec {
                name: spec.param.to_string(),
                reason: "unit counts must be positive".into(),
            });
        }
    }
    if output_classes == 0 {
        return Err(Error::InvalidInput("output_classes must be positive".into()));
    }
    Ok(SearchSpace {
        specs,
        output_classes,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDef {
    lo: u32,
    hi: u32,
    step: u32,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DropoutDef {
    lo_hundredths: u32,
    hi_hundredths: u32,
    step_hundredths: u32,
}

/// On-disk space definition.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    block: GridDef,
    k1: GridDef,
    k2: GridDef,
    k3: GridDef,
    k4: GridDef,
    fc1: GridDef,
    do1: DropoutDef,
    fc2: GridDef,
    do2: DropoutDef,
    #[serde(default = "default_output_classes")]
    output_classes: u32,
}

impl SpaceFile {
    fn into_space(self) -> Result<SearchSpace> {
        let g = |p, d: GridDef| ParamSpec::new(p, d.lo, d.hi, d.step);
        let d = |p, d: DropoutDef| ParamSpec::new(p, d.lo_hundredths, d.hi_hundredths, d.step_hundredths);
        build_space(
            &[
                g(Param::Block, self.block),
                g(Param::K1, self.k1),
                g(Param::K2, self.k2),
                g(Param::K3, self.k3),
                g(Param::K4, self.k4),
                g(Param::Fc1, self.fc1),
                d(Param::Do1, self.do1),
                g(Param::Fc2, self.fc2),
                d(Param::Do2, self.do2),
            ],
            self.output_classes,
        )
    }

    fn from_space(space: &SearchSpace) -> Self {
        let g = |p| {
            let s = space.spec(p);
            GridDef {
                lo: s.lo,
                hi: s.hi,
                step: s.step,
            }
        };
        let d = |p| {
            let s = space.spec(p);
            DropoutDef {
                lo_hundredths: s.lo,
                hi_hundredths: s.hi,
                step_hundredths: s.step,
            }
        };
        SpaceFile {
            block: g(Param::Block),
            k1: g(Param::K1),
            k2: g(Param::K2),
            k3: g(Param::K3),
            k4: g(Param::K4),
            fc1: g(Param::Fc1),
            do1: d(Param::Do1),
            fc2: g(Param::Fc2),
            do2: d(Param::Do2),
            output_classes: space.output_classes,
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Block 2..3, K1 {6,8}, K2 {24}, K3 {36,40,44}, all other grids single-point.
    pub(crate) fn toy8() -> SearchSpace {
        build_space(
            &[
                ParamSpec::new(Param::Block, 2, 3, 1),
                ParamSpec::new(Param::K1, 6, 8, 2),
                ParamSpec::new(Param::K2, 24, 24, 4),
                ParamSpec::new(Param::K3, 36, 44, 4),
                ParamSpec::new(Param::K4, 52, 52, 4),
                ParamSpec::new(Param::Fc1, 100, 100, 5),
                ParamSpec::new(Param::Do1, 10, 10, 1),
                ParamSpec::new(Param::Fc2, 80, 80, 5),
                ParamSpec::new(Param::Do2, 10, 10, 1),
            ],
            7,
        )
        .unwrap()
    }

    pub(crate) fn pi_best() -> Configuration {
        Configuration {
            block: 2,
            k1: 16,
            k2: 24,
            k3: None,
            k4: None,
            fc1: 100,
            do1: Dropout(20),
            fc2: 80,
            do2: Dropout(14),
            output_classes: 7,
        }
    }

    fn single_point() -> SearchSpace {
        let s = |p, v| ParamSpec::new(p, v, v, 1);
        build_space(
            &[
                s(Param::Block, 2),
                s(Param::K1, 6),
                s(Param::K2, 24),
                s(Param::K3, 36),
                s(Param::K4, 52),
                s(Param::Fc1, 100),
                s(Param::Do1, 10),
                s(Param::Fc2, 80),
                s(Param::Do2, 10),
            ],
            7,
        )
        .unwrap()
    }

    #[test]
    fn table1_grid_sizes() {
        let space = SearchSpace::table1();
        let sizes: Vec<usize> = Param::ALL.iter().map(|&p| space.spec(p).grid_size()).collect();
        assert_eq!(sizes, vec![3, 6, 3, 4, 4, 5, 21, 5, 21]);
    }

    #[test]
    fn misaligned_grid_names_parameter() {
        let mut specs: Vec<ParamSpec> = SearchSpace::table1().specs().to_vec();
        specs[1] = ParamSpec::new(Param::K1, 6, 15, 2);
        let err = build_space(&specs, 7).unwrap_err();
        assert_eq!(err.to_string(), "grid misaligned: K1");
        assert!(err.is_validation());
    }

    #[test]
    fn missing_and_duplicate_specs_rejected() {
        let specs: Vec<ParamSpec> = SearchSpace::table1().specs()[..8].to_vec();
        assert!(matches!(build_space(&specs, 7), Err(Error::MissingSpec(p)) if p == "DO2"));
        let mut dup = SearchSpace::table1().specs().to_vec();
        dup.push(ParamSpec::new(Param::K1, 6, 6, 1));
        assert!(build_space(&dup, 7).is_err());
    }

    #[test]
    fn cardinalities() {
        let space = SearchSpace::table1();
        assert_eq!(space.cardinality(), 4_167_450);
        assert_eq!(space.unconditional_cardinality(), 9_525_600);
        assert_eq!(single_point().cardinality(), 1);
        assert_eq!(toy8().cardinality(), 8);
    }

    #[test]
    fn conditional_activation_attached() {
        let space = SearchSpace::table1();
        assert_eq!(space.spec(Param::K3).active_when, Some(3));
        assert_eq!(space.spec(Param::K4).active_when, Some(4));
        assert_eq!(space.spec(Param::K1).active_when, None);
    }

    #[test]
    fn validate_examples() {
        let space = SearchSpace::table1();
        assert!(space.validate(&pi_best()).is_valid());

        let with_k3 = Configuration {
            k3: Some(36),
            ..pi_best()
        };
        assert_eq!(space.validate(&with_k3).reasons(), vec!["K3 inactive for block=2"]);

        let coral_pdp = Configuration {
            k1: 18,
            fc1: 110,
            do1: Dropout(15),
            fc2: 95,
            do2: Dropout(29),
            ..pi_best()
        };
        assert_eq!(
            space.validate(&coral_pdp).reasons(),
            vec!["K1=18 off-grid (6..16 step 2)"]
        );

        let missing = Configuration {
            block: 3,
            ..pi_best()
        };
        assert_eq!(space.validate(&missing).reasons(), vec!["K3 missing for block=3"]);

        let bad_dropout = Configuration {
            do2: Dropout(35),
            ..pi_best()
        };
        assert_eq!(
            space.validate(&bad_dropout).reasons(),
            vec!["DO2=0.35 off-grid (0.10..0.30 step 0.01)"]
        );
    }

    #[test]
    fn canonical_corners() {
        let space = SearchSpace::table1();
        let first = space.config_from_index(0).unwrap();
        assert_eq!(
            first,
            Configuration {
                block: 2,
                k1: 6,
                k2: 24,
                k3: None,
                k4: None,
                fc1: 100,
                do1: Dropout(10),
                fc2: 80,
                do2: Dropout(10),
                output_classes: 7,
            }
        );
        let last = space.config_from_index(space.cardinality() - 1).unwrap();
        assert_eq!(
            last,
            Configuration {
                block: 4,
                k1: 16,
                k2: 32,
                k3: Some(48),
                k4: Some(64),
                fc1: 120,
                do1: Dropout(30),
                fc2: 100,
                do2: Dropout(30),
                output_classes: 7,
            }
        );
        assert!(matches!(
            space.config_from_index(space.cardinality()),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn toy_enumeration_is_exhaustive_and_distinct() {
        let space = toy8();
        let all: Vec<_> = space.iter().collect();
        let mut unique = all.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), 8);
        for (i, c) in all.iter().enumerate() {
            assert!(space.validate(c).is_valid());
            assert_eq!(space.index_of(c).unwrap(), i as u64);
        }
        assert_eq!(all.iter().filter(|c| c.block == 2).count(), 2);
    }

    #[test]
    fn sampling_is_seeded_and_uniform() {
        let space = toy8();
        let draw = |seed| space.sample_uniform(&mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(draw(42), draw(42));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 8];
        for _ in 0..10_000 {
            let c = space.sample_uniform(&mut rng);
            assert!(space.validate(&c).is_valid());
            counts[space.index_of(&c).unwrap() as usize] += 1;
        }
        for n in counts {
            let freq = n as f64 / 10_000.0;
            assert!((freq - 0.125).abs() <= 0.02, "frequency {freq}");
        }
    }

    #[test]
    fn json_roundtrip_and_config_file() {
        let space = SearchSpace::table1();
        assert_eq!(SearchSpace::from_json(&space.to_json()).unwrap(), space);

        let c = Configuration::from_json(
            r#"{"block":2,"k1":16,"k2":24,"fc1":100,"do1_hundredths":20,"fc2":80,"do2_hundredths":14}"#,
        )
        .unwrap();
        assert_eq!(c, pi_best());
        let text = serde_json::to_string(&c).unwrap();
        assert!(!text.contains("k3"));
    }

    #[test]
    fn dropout_renders_as_probability() {
        assert_eq!(Dropout(20).to_string(), "0.20");
        assert_eq!(Dropout(14).to_string(), "0.14");
        assert!((Dropout(29).probability() - 0.29).abs() < 1e-12);
    }
}
