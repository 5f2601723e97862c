//! Network description and assembly of the complex topology matrix `H`.
//!
//! A network is a set of buses, pi-model lines (series admittance plus one
//! shunt admittance per side), current meters bound to oriented lines, and a
//! list of PMU-equipped buses. The topology matrix stacks the voltage
//! incidence block on top of the current block:
//!
//! ```text
//!     H = [ Pi          ]      Pi : L x N, one 1 per row (PMU bus)
//!         [ Yl*A + Ys   ]      A  : M x N, +1 at the from bus, -1 at the to bus
//! ```
//!
//! `Yl` is the M x M diagonal of series admittances of the metered lines and
//! `Ys` holds the shunt admittance on the side the meter leaves from. For
//! three-phase networks every scalar rule is applied blockwise with 3 x 3
//! admittance blocks (1 becomes the 3 x 3 identity).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Line admittance: a scalar for single-phase networks, a 3 x 3 block for
/// three-phase ones. Serialized as `[re, im]` or a row-major 3 x 3 array of
/// `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq)]
pub enum Admittance {
    Scalar(Complex64),
    Block([[Complex64; 3]; 3]),
}

impl Admittance {
    pub fn scalar(re: f64, im: f64) -> Self {
        Admittance::Scalar(Complex64::new(re, im))
    }

    pub fn as_scalar(&self) -> Option<Complex64> {
        match self {
            Admittance::Scalar(y) => Some(*y),
            Admittance::Block(_) => None,
        }
    }

    pub fn as_block(&self) -> Option<&[[Complex64; 3]; 3]> {
        match self {
            Admittance::Scalar(_) => None,
            Admittance::Block(b) => Some(b),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Admittance::Scalar(y) => y.norm_sqr() == 0.0,
            Admittance::Block(b) => b.iter().flatten().all(|y| y.norm_sqr() == 0.0),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AdmittanceRaw {
    Scalar([f64; 2]),
    Block([[[f64; 2]; 3]; 3]),
}

impl Serialize for Admittance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let raw = match self {
            Admittance::Scalar(y) => AdmittanceRaw::Scalar([y.re, y.im]),
            Admittance::Block(b) => {
                let mut out = [[[0.0; 2]; 3]; 3];
                for (i, row) in b.iter().enumerate() {
                    for (j, y) in row.iter().enumerate() {
                        out[i][j] = [y.re, y.im];
                    }
                }
                AdmittanceRaw::Block(out)
            }
        };
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Admittance {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(match AdmittanceRaw::deserialize(d)? {
            AdmittanceRaw::Scalar([re, im]) => Admittance::Scalar(Complex64::new(re, im)),
            AdmittanceRaw::Block(raw) => {
                let mut b = [[Complex64::default(); 3]; 3];
                for (i, row) in raw.iter().enumerate() {
                    for (j, [re, im]) in row.iter().enumerate() {
                        b[i][j] = Complex64::new(*re, *im);
                    }
                }
                Admittance::Block(b)
            }
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    #[serde(default = "default_phases")]
    pub phases: u8,
}

fn default_phases() -> u8 {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Line {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub y_series: Admittance,
    pub y_shunt_from: Admittance,
    pub y_shunt_to: Admittance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    FromTo,
    ToFrom,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurrentMeter {
    pub line: usize,
    pub direction: Direction,
}

/// A full network description as found in a network JSON file. Meter order
/// fixes the rows of `A`; PMU order fixes the rows of `Pi`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkModel {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub current_meters: Vec<CurrentMeter>,
    pub pmu_buses: Vec<usize>,
    /// Ordered side-chain groups of 1-based meter serial numbers; the
    /// quantized-channel ladder accumulates these groups front to back.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub side_chains: Vec<Vec<usize>>,
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("duplicate bus id {0}")]
    DuplicateBusId(usize),
    #[error("bus ids must be contiguous 1..=N; id {0} is out of range or missing")]
    NonContiguousBusIds(usize),
    #[error("network declares no buses")]
    EmptyBusSet,
    #[error("all buses must share one phase count")]
    MixedPhaseCount,
    #[error("bus {0} has unsupported phase count {1} (expected 1 or 3)")]
    BadPhaseCount(usize, u8),
    #[error("duplicate line id {0}")]
    DuplicateLineId(usize),
    #[error("line {0} connects bus {1} to itself")]
    SelfLoop(usize, usize),
    #[error("line {line} references unknown bus {bus}")]
    DanglingBusRef { line: usize, bus: usize },
    #[error("line {0} has zero series admittance")]
    ZeroSeriesAdmittance(usize),
    #[error("meter {meter} references unknown line {line}")]
    DanglingLineRef { meter: usize, line: usize },
    #[error("network declares no current meters")]
    EmptyMeterSet,
    #[error("underdetermined system: L + M = {p} < N = {n}")]
    Underdetermined { p: usize, n: usize },
    #[error("pmu bus list repeats bus {0}")]
    DuplicatePmuBus(usize),
    #[error("pmu bus {0} does not exist")]
    DanglingPmuBus(usize),
    #[error("line {0} lacks a 3 x 3 admittance block required by a three-phase network")]
    MissingPhaseBlock(usize),
    #[error("line {0} carries a 3 x 3 admittance block in a single-phase network")]
    UnexpectedPhaseBlock(usize),
    #[error("side-chain group references unknown meter {0}")]
    DanglingSideChainMeter(usize),
}

/// A network that has passed [`validate_network`]. `P = L + M` is assigned
/// here and all matrix builders take this type.
#[derive(Clone, Debug)]
pub struct ValidatedNetwork {
    model: NetworkModel,
    p: usize,
}

impl ValidatedNetwork {
    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    /// Number of buses.
    pub fn n(&self) -> usize {
        self.model.buses.len()
    }

    /// Number of voltage (PMU) measurements.
    pub fn l(&self) -> usize {
        self.model.pmu_buses.len()
    }

    /// Number of current measurements.
    pub fn m(&self) -> usize {
        self.model.current_meters.len()
    }

    /// Total measurement count `P = L + M`.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn phases(&self) -> u8 {
        self.model.buses[0].phases
    }

    fn line(&self, id: usize) -> &Line {
        // validation guarantees the id resolves
        self.model.lines.iter().find(|l| l.id == id).unwrap()
    }

    /// The line a meter is bound to, plus the bus it leaves from and heads to.
    fn meter_endpoints(&self, meter: &CurrentMeter) -> (&Line, usize, usize) {
        let line = self.line(meter.line);
        match meter.direction {
            Direction::FromTo => (line, line.from, line.to),
            Direction::ToFrom => (line, line.to, line.from),
        }
    }
}

/// Check every structural invariant of a network description and assign
/// `P = L + M`.
pub fn validate_network(model: NetworkModel) -> Result<ValidatedNetwork, TopologyError> {
    if model.buses.is_empty() {
        return Err(TopologyError::EmptyBusSet);
    }
    let n = model.buses.len();
    let mut seen = vec![false; n];
    for bus in &model.buses {
        if bus.id == 0 || bus.id > n {
            return Err(TopologyError::NonContiguousBusIds(bus.id));
        }
        if seen[bus.id - 1] {
            return Err(TopologyError::DuplicateBusId(bus.id));
        }
        seen[bus.id - 1] = true;
    }
    let phases = model.buses[0].phases;
    if phases != 1 && phases != 3 {
        return Err(TopologyError::BadPhaseCount(model.buses[0].id, phases));
    }
    if let Some(bus) = model.buses.iter().find(|b| b.phases != phases) {
        if bus.phases != 1 && bus.phases != 3 {
            return Err(TopologyError::BadPhaseCount(bus.id, bus.phases));
        }
        return Err(TopologyError::MixedPhaseCount);
    }

    let mut line_ids = std::collections::HashSet::new();
    for line in &model.lines {
        if !line_ids.insert(line.id) {
            return Err(TopologyError::DuplicateLineId(line.id));
        }
        if line.from == line.to {
            return Err(TopologyError::SelfLoop(line.id, line.from));
        }
        for bus in [line.from, line.to] {
            if bus == 0 || bus > n {
                return Err(TopologyError::DanglingBusRef { line: line.id, bus });
            }
        }
        if line.y_series.is_zero() {
            return Err(TopologyError::ZeroSeriesAdmittance(line.id));
        }
    }

    if model.current_meters.is_empty() {
        return Err(TopologyError::EmptyMeterSet);
    }
    for (idx, meter) in model.current_meters.iter().enumerate() {
        if !line_ids.contains(&meter.line) {
            return Err(TopologyError::DanglingLineRef {
                meter: idx + 1,
                line: meter.line,
            });
        }
    }

    let mut pmu_seen = std::collections::HashSet::new();
    for &bus in &model.pmu_buses {
        if bus == 0 || bus > n {
            return Err(TopologyError::DanglingPmuBus(bus));
        }
        if !pmu_seen.insert(bus) {
            return Err(TopologyError::DuplicatePmuBus(bus));
        }
    }

    let m = model.current_meters.len();
    for serial in model.side_chains.iter().flatten() {
        if *serial == 0 || *serial > m {
            return Err(TopologyError::DanglingSideChainMeter(*serial));
        }
    }

    let p = model.pmu_buses.len() + m;
    if p < n {
        return Err(TopologyError::Underdetermined { p, n });
    }
    Ok(ValidatedNetwork { model, p })
}

/// Load and validate a network from JSON text.
pub fn network_from_json(text: &str) -> Result<ValidatedNetwork, NetworkLoadError> {
    let model: NetworkModel = serde_json::from_str(text)?;
    Ok(validate_network(model)?)
}

#[derive(Debug, Error)]
pub enum NetworkLoadError {
    #[error("network JSON parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] TopologyError),
}

/// The current measurement-bus incidence matrix `A` (M x N): row `m` holds +1
/// at the bus the meter leaves from and -1 at the bus it heads toward.
pub fn build_current_incidence(net: &ValidatedNetwork) -> DMatrix<f64> {
    let (m, n) = (net.m(), net.n());
    let mut a = DMatrix::zeros(m, n);
    for (row, meter) in net.model.current_meters.iter().enumerate() {
        let (_, leaves, heads) = net.meter_endpoints(meter);
        a[(row, leaves - 1)] = 1.0;
        a[(row, heads - 1)] = -1.0;
    }
    a
}

/// The voltage measurement-bus incidence matrix `Pi` (L x N): row `l` holds a
/// single 1 at the l-th PMU bus.
pub fn build_voltage_incidence(net: &ValidatedNetwork) -> DMatrix<f64> {
    let (l, n) = (net.l(), net.n());
    let mut pi = DMatrix::zeros(l, n);
    for (row, &bus) in net.model.pmu_buses.iter().enumerate() {
        pi[(row, bus - 1)] = 1.0;
    }
    pi
}

/// The diagonal series admittance matrix `Yl` (M x M); entry (m, m) is the
/// series admittance of the line meter `m` measures.
pub fn build_series_admittance(net: &ValidatedNetwork) -> Result<DMatrix<Complex64>, TopologyError> {
    let m = net.m();
    let mut y_l = DMatrix::zeros(m, m);
    for (row, meter) in net.model.current_meters.iter().enumerate() {
        let (line, _, _) = net.meter_endpoints(meter);
        y_l[(row, row)] = scalar_y(&line.y_series, line.id)?;
    }
    Ok(y_l)
}

/// The shunt admittance matrix `Ys` (M x N): entry (m, n) is the shunt
/// admittance on the side of meter m's line facing bus n when the meter
/// leaves bus n; zero elsewhere.
pub fn build_shunt_admittance(net: &ValidatedNetwork) -> Result<DMatrix<Complex64>, TopologyError> {
    let (m, n) = (net.m(), net.n());
    let mut y_s = DMatrix::zeros(m, n);
    for (row, meter) in net.model.current_meters.iter().enumerate() {
        let (line, leaves, _) = net.meter_endpoints(meter);
        let shunt = match meter.direction {
            Direction::FromTo => &line.y_shunt_from,
            Direction::ToFrom => &line.y_shunt_to,
        };
        y_s[(row, leaves - 1)] = scalar_y(shunt, line.id)?;
    }
    Ok(y_s)
}

fn scalar_y(y: &Admittance, line_id: usize) -> Result<Complex64, TopologyError> {
    y.as_scalar()
        .ok_or(TopologyError::UnexpectedPhaseBlock(line_id))
}

/// The assembled topology matrix with its constituent blocks.
#[derive(Clone, Debug)]
pub struct TopologyMatrix {
    /// The full P x N (or 3P x 3N) measurement matrix.
    pub h: DMatrix<Complex64>,
    pub pi: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub y_l: DMatrix<Complex64>,
    pub y_s: DMatrix<Complex64>,
    /// Buses, voltage channels, current channels of the underlying network
    /// (not scaled by the phase count).
    pub n_buses: usize,
    pub l: usize,
    pub m: usize,
    pub phases: u8,
}

impl TopologyMatrix {
    /// Rows of `h`.
    pub fn rows(&self) -> usize {
        self.h.nrows()
    }

    /// Columns of `h` (state dimension).
    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }
}

/// Stack `[Pi ; Yl*A + Ys]` for a single-phase network.
pub fn assemble_topology(net: &ValidatedNetwork) -> Result<TopologyMatrix, TopologyError> {
    let pi = build_voltage_incidence(net);
    let a = build_current_incidence(net);
    let y_l = build_series_admittance(net)?;
    let y_s = build_shunt_admittance(net)?;

    let (l, m, n) = (net.l(), net.m(), net.n());
    let current_block = &y_l * a.map(|v| Complex64::new(v, 0.0)) + &y_s;
    let mut h = DMatrix::zeros(l + m, n);
    for row in 0..l {
        for col in 0..n {
            h[(row, col)] = Complex64::new(pi[(row, col)], 0.0);
        }
    }
    for row in 0..m {
        for col in 0..n {
            h[(l + row, col)] = current_block[(row, col)];
        }
    }
    Ok(TopologyMatrix {
        h,
        pi,
        a,
        y_l,
        y_s,
        n_buses: n,
        l,
        m,
        phases: 1,
    })
}

/// Blockwise three-phase expansion: every 1 in `Pi`/`A` becomes the 3 x 3
/// identity, every admittance scalar slot becomes that line's 3 x 3 block,
/// giving a 3P x 3N topology matrix.
pub fn expand_three_phase(net: &ValidatedNetwork) -> Result<TopologyMatrix, TopologyError> {
    let (l, m, n) = (net.l(), net.m(), net.n());

    let mut pi = DMatrix::zeros(3 * l, 3 * n);
    for (row, &bus) in net.model.pmu_buses.iter().enumerate() {
        for ph in 0..3 {
            pi[(3 * row + ph, 3 * (bus - 1) + ph)] = 1.0;
        }
    }

    let mut a = DMatrix::zeros(3 * m, 3 * n);
    let mut y_l = DMatrix::zeros(3 * m, 3 * m);
    let mut y_s = DMatrix::zeros(3 * m, 3 * n);
    for (row, meter) in net.model.current_meters.iter().enumerate() {
        let (line, leaves, heads) = net.meter_endpoints(meter);
        for ph in 0..3 {
            a[(3 * row + ph, 3 * (leaves - 1) + ph)] = 1.0;
            a[(3 * row + ph, 3 * (heads - 1) + ph)] = -1.0;
        }
        let series = block_y(&line.y_series, line.id)?;
        let shunt = match meter.direction {
            Direction::FromTo => block_y(&line.y_shunt_from, line.id)?,
            Direction::ToFrom => block_y(&line.y_shunt_to, line.id)?,
        };
        for i in 0..3 {
            for j in 0..3 {
                y_l[(3 * row + i, 3 * row + j)] = series[i][j];
                y_s[(3 * row + i, 3 * (leaves - 1) + j)] = shunt[i][j];
            }
        }
    }

    let current_block = &y_l * a.map(|v| Complex64::new(v, 0.0)) + &y_s;
    let mut h = DMatrix::zeros(3 * (l + m), 3 * n);
    for row in 0..3 * l {
        for col in 0..3 * n {
            h[(row, col)] = Complex64::new(pi[(row, col)], 0.0);
        }
    }
    for row in 0..3 * m {
        for col in 0..3 * n {
            h[(3 * l + row, col)] = current_block[(row, col)];
        }
    }
    Ok(TopologyMatrix {
        h,
        pi,
        a,
        y_l,
        y_s,
        n_buses: n,
        l,
        m,
        phases: 3,
    })
}

fn block_y(y: &Admittance, line_id: usize) -> Result<[[Complex64; 3]; 3], TopologyError> {
    y.as_block()
        .copied()
        .ok_or(TopologyError::MissingPhaseBlock(line_id))
}

/// Assemble `H` for either phase count.
pub fn topology_for(net: &ValidatedNetwork) -> Result<TopologyMatrix, TopologyError> {
    match net.phases() {
        3 => expand_three_phase(net),
        _ => assemble_topology(net),
    }
}
