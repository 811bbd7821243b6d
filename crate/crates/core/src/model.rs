//! Plant description, assumption checks and the text file format.

use crate::numerics::{
    self, eig_sym, pd_inv_sqrt, psd_sqrt, sigma_max_real, sigma_min_real, LinalgError,
    SolverOptions,
};
use crate::scalar::Real;
use nalgebra::DMatrix;
use std::fmt::{self, Write as _};
use std::path::Path;
use thiserror::Error;

/// Eigenvalues this close to the unit circle count as on it.
pub const UNIT_CIRCLE_TOL: f64 = 1e-9;
/// Relative singular-value threshold for rank decisions.
pub const RANK_TOL: f64 = 1e-9;
/// Frequency points used by the `G(e^{jω})` rank check.
pub const RANK_GRID: usize = 256;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("parse error: missing key {0}")]
    MissingKey(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{what} is not positive definite (min eigenvalue {min_eig:e})")]
    NotPd { what: &'static str, min_eig: f64 },
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Discrete-time plant `x⁺ = A x + B_u u + B_w w` with stage cost
/// `xᵀQx + uᵀRu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem<T: Real> {
    pub name: Option<String>,
    pub a: DMatrix<T>,
    pub b_u: DMatrix<T>,
    pub b_w: DMatrix<T>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

impl<T: Real> LtiSystem<T> {
    /// Checks shapes and finiteness. Definiteness and the control-theoretic
    /// assumptions are left to [`validate`].
    pub fn new(
        a: DMatrix<T>,
        b_u: DMatrix<T>,
        b_w: DMatrix<T>,
        q: DMatrix<T>,
        r: DMatrix<T>,
    ) -> Result<Self> {
        let n = a.nrows();
        let dim = |ok: bool, msg: String| if ok { Ok(()) } else { Err(ModelError::DimensionMismatch(msg)) };
        dim(n > 0 && a.ncols() == n, format!("A must be square and nonempty, got {}x{}", n, a.ncols()))?;
        dim(b_u.nrows() == n, format!("B_u must have {n} rows, has {}", b_u.nrows()))?;
        dim(b_w.nrows() == n, format!("B_w must have {n} rows, has {}", b_w.nrows()))?;
        dim(b_u.ncols() > 0, "B_u must have at least one column".into())?;
        dim(b_w.ncols() > 0, "B_w must have at least one column".into())?;
        dim(q.shape() == (n, n), format!("Q must be {n}x{n}, got {}x{}", q.nrows(), q.ncols()))?;
        let p = b_u.ncols();
        dim(r.shape() == (p, p), format!("R must be {p}x{p}, got {}x{}", r.nrows(), r.ncols()))?;
        for (m, what) in [(&a, "A"), (&b_u, "B_u"), (&b_w, "B_w"), (&q, "Q"), (&r, "R")] {
            if !crate::scalar::all_finite(m) {
                return Err(ModelError::NonFinite(what));
            }
        }
        Ok(Self { name: None, a, b_u, b_w, q, r })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// Scalar plant `(A, B_u, B_w, Q, R)`.
    pub fn scalar(a: T, b_u: T, b_w: T, q: T, r: T) -> Result<Self> {
        let s = |x| DMatrix::from_element(1, 1, x);
        Self::new(s(a), s(b_u), s(b_w), s(q), s(r))
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `p`.
    pub fn p(&self) -> usize {
        self.b_u.ncols()
    }

    /// Disturbance dimension `m`.
    pub fn m(&self) -> usize {
        self.b_w.ncols()
    }

    pub fn q_sqrt(&self) -> Result<DMatrix<T>> {
        Ok(psd_sqrt(&self.q)?)
    }

    /// `R^{-1/2}`, the map from normalized inputs back to original ones.
    pub fn r_inv_sqrt(&self) -> Result<DMatrix<T>> {
        pd_inv_sqrt(&self.r).map_err(|e| match e {
            LinalgError::NotPd { min_eig } => ModelError::NotPd { what: "R", min_eig },
            other => other.into(),
        })
    }

    /// Rescales `B_u ← B_u R^{-1/2}` and sets `R = I`.
    pub fn normalize_r(&self) -> Result<Self> {
        let p = self.p();
        if self.r == DMatrix::identity(p, p) {
            return Ok(self.clone());
        }
        let r_is = self.r_inv_sqrt()?;
        Ok(Self {
            name: self.name.clone(),
            a: self.a.clone(),
            b_u: &self.b_u * r_is,
            b_w: self.b_w.clone(),
            q: self.q.clone(),
            r: DMatrix::identity(p, p),
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.r == DMatrix::identity(self.p(), self.p())
    }

    /// Converts every matrix to another scalar type.
    pub fn cast<S: Real>(&self) -> LtiSystem<S> {
        let c = |m: &DMatrix<T>| m.map(|x| S::lit(x.as_f64()));
        LtiSystem {
            name: self.name.clone(),
            a: c(&self.a),
            b_u: c(&self.b_u),
            b_w: c(&self.b_w),
            q: c(&self.q),
            r: c(&self.r),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckKind {
    QPositiveDefinite,
    RPositiveDefinite,
    Stabilizable,
    BwFullColumnRank,
    NoUnitCircleEigenvalue,
    GFullColumnRank,
}

impl CheckKind {
    pub fn label(self) -> &'static str {
        match self {
            CheckKind::QPositiveDefinite => "Q positive definite",
            CheckKind::RPositiveDefinite => "R positive definite",
            CheckKind::Stabilizable => "(A, B_u) stabilizable",
            CheckKind::BwFullColumnRank => "B_w full column rank",
            CheckKind::NoUnitCircleEigenvalue => "no eigenvalue of A on the unit circle",
            CheckKind::GFullColumnRank => "G(e^jw) full column rank on grid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub kind: CheckKind,
    pub passed: bool,
    /// Quantity the decision was based on.
    pub witness: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, kind: CheckKind) -> Option<&Check> {
        self.checks.iter().find(|c| c.kind == kind)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "[{}] {:<40} witness={:.6e}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.kind.label(),
                c.witness,
                c.detail
            )?;
        }
        Ok(())
    }
}

/// Checks the standing assumptions of the synthesis routines.
pub fn validate<T: Real>(sys: &LtiSystem<T>) -> ValidationReport {
    let mut checks = Vec::new();

    for (kind, m) in [
        (CheckKind::QPositiveDefinite, &sys.q),
        (CheckKind::RPositiveDefinite, &sys.r),
    ] {
        let sym_err = (m - m.transpose()).norm();
        let min = eig_sym(m).0.iter().last().copied().unwrap_or(T::zero());
        let symmetric = sym_err <= T::lit(1e-10) * (T::one() + m.norm());
        let pd = numerics::is_pd(m);
        checks.push(Check {
            kind,
            passed: symmetric && pd,
            witness: min.as_f64(),
            detail: if symmetric {
                "min eigenvalue".into()
            } else {
                format!("not symmetric (asymmetry {:.3e})", sym_err.as_f64())
            },
        });
    }

    let stab = match numerics::solve_dare(&sys.a, &sys.b_u, &sys.q, &sys.r, &SolverOptions::default()) {
        Ok(sol) => Check {
            kind: CheckKind::Stabilizable,
            passed: sol.closed_loop_radius < T::one(),
            witness: sol.closed_loop_radius.as_f64(),
            detail: "LQR closed-loop spectral radius".into(),
        },
        Err(e) => Check {
            kind: CheckKind::Stabilizable,
            passed: false,
            witness: numerics::spectral_radius(&sys.a).as_f64(),
            detail: format!("spectral radius of A; Riccati solve failed: {e}"),
        },
    };
    checks.push(stab);

    let smax = sigma_max_real(&sys.b_w);
    let smin = sigma_min_real(&sys.b_w);
    let full_rank = sys.m() <= sys.n() && smin > T::lit(RANK_TOL) * smax && smax > T::zero();
    checks.push(Check {
        kind: CheckKind::BwFullColumnRank,
        passed: full_rank,
        witness: smin.as_f64(),
        detail: format!("min singular value (threshold {:.3e})", RANK_TOL * smax.as_f64()),
    });

    let gap = sys
        .a
        .complex_eigenvalues()
        .iter()
        .map(|z| (nalgebra::ComplexField::modulus(*z) - T::one()).abs())
        .fold(T::max_value().unwrap(), |m, x| if x < m { x } else { m });
    let off_circle = gap > T::lit(UNIT_CIRCLE_TOL);
    checks.push(Check {
        kind: CheckKind::NoUnitCircleEigenvalue,
        passed: off_circle,
        witness: gap.as_f64(),
        detail: "min | |lambda| - 1 | over eigenvalues of A".into(),
    });

    let g_check = if !off_circle {
        Check {
            kind: CheckKind::GFullColumnRank,
            passed: false,
            witness: f64::NAN,
            detail: "not evaluated: A has a unit-circle eigenvalue".into(),
        }
    } else {
        match g_rank_witness(sys) {
            Ok((ratio, omega)) => Check {
                kind: CheckKind::GFullColumnRank,
                passed: ratio > RANK_TOL,
                witness: ratio,
                detail: format!("min sigma_min/sigma_max, attained at w={omega:.6}"),
            },
            Err(e) => Check {
                kind: CheckKind::GFullColumnRank,
                passed: false,
                witness: f64::NAN,
                detail: format!("evaluation failed: {e}"),
            },
        }
    };
    checks.push(g_check);

    ValidationReport { checks }
}

/// Smallest relative singular value `σ_min/σ_max` of `G(e^{jω})` over the
/// rank grid, refined by golden-section search around the minimum.
fn g_rank_witness<T: Real>(sys: &LtiSystem<T>) -> std::result::Result<(f64, f64), crate::pipeline::PipelineError> {
    let g = crate::pipeline::build_g(sys)?;
    let ratio = |w: f64| -> f64 {
        match g.eval(T::lit(w)) {
            Ok(v) => {
                let sv = v.singular_values();
                let hi = sv.iter().fold(T::zero(), |a, &b| if b > a { b } else { a });
                let lo = sv.iter().fold(T::max_value().unwrap(), |a, &b| if b < a { b } else { a });
                if sys.m() > sys.n() || hi == T::zero() {
                    0.0
                } else {
                    (lo / hi).as_f64()
                }
            }
            Err(_) => 0.0,
        }
    };
    let step = std::f64::consts::PI / (RANK_GRID as f64 - 1.0);
    let (mut best_w, mut best) = (0.0, f64::INFINITY);
    for k in 0..RANK_GRID {
        let w = k as f64 * step;
        let v = ratio(w);
        if v < best {
            best = v;
            best_w = w;
        }
    }
    let (w, v) = golden_min(&ratio, (best_w - step).max(0.0), (best_w + step).min(std::f64::consts::PI), 30);
    if v < best {
        best = v;
        best_w = w;
    }
    Ok((best, best_w))
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub(crate) fn golden_min(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

// ---------------------------------------------------------------------------
// text format
// ---------------------------------------------------------------------------

/// One `key = value` entry of a system or controller file.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Matrix(DMatrix<f64>),
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub value: Value,
    pub line: usize,
}

/// Parsed `key = value` document, keys in file order.
#[derive(Debug, Clone, Default)]
pub struct Document {
    pub entries: Vec<Entry>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<Entry> = Vec::new();
        let lines: Vec<&str> = text.lines().collect();
        let mut i = 0;
        while i < lines.len() {
            let line_no = i + 1;
            let raw = strip_comment(lines[i]);
            i += 1;
            if raw.trim().is_empty() {
                continue;
            }
            let Some(eq) = raw.find('=') else {
                return Err(ModelError::Parse {
                    line: line_no,
                    column: 1 + raw.len() - raw.trim_start().len(),
                    message: "expected `key = value`".into(),
                });
            };
            let key = raw[..eq].trim().to_string();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ModelError::Parse {
                    line: line_no,
                    column: 1,
                    message: format!("invalid key `{key}`"),
                });
            }
            if entries.iter().any(|e| e.key == key) {
                return Err(ModelError::Parse {
                    line: line_no,
                    column: 1,
                    message: format!("duplicate key `{key}`"),
                });
            }
            let rest = &raw[eq + 1..];
            let value_col = eq + 2 + rest.len() - rest.trim_start().len();
            let rest = rest.trim();
            let value = if rest.starts_with('[') {
                let mut body = rest.to_string();
                while !body.contains(']') && i < lines.len() {
                    body.push(';');
                    body.push_str(strip_comment(lines[i]));
                    i += 1;
                }
                Value::Matrix(parse_matrix(&body, line_no, value_col)?)
            } else if rest.is_empty() {
                return Err(ModelError::Parse {
                    line: line_no,
                    column: value_col,
                    message: format!("empty value for `{key}`"),
                });
            } else {
                Value::Text(rest.to_string())
            };
            entries.push(Entry { key, value, line: line_no });
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn matrix(&self, key: &str) -> Result<DMatrix<f64>> {
        match self.get(key) {
            Some(Entry { value: Value::Matrix(m), .. }) => Ok(m.clone()),
            Some(e) => Err(ModelError::Parse {
                line: e.line,
                column: 1,
                message: format!("`{key}` must be a bracketed matrix"),
            }),
            None => Err(ModelError::MissingKey(key.into())),
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match self.get(key) {
            Some(Entry { value: Value::Text(t), .. }) => Some(t),
            _ => None,
        }
    }

    /// Non-negative integer value of `key`, if present.
    pub fn count(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(Entry { value: Value::Text(t), line, .. }) => t.parse().map(Some).map_err(|_| ModelError::Parse {
                line: *line,
                column: 1,
                message: format!("`{key}` must be a non-negative integer"),
            }),
            Some(e) => Err(ModelError::Parse {
                line: e.line,
                column: 1,
                message: format!("`{key}` must be an integer"),
            }),
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_matrix(body: &str, line: usize, column: usize) -> Result<DMatrix<f64>> {
    let err = |offset: usize, message: String| ModelError::Parse {
        line,
        column: column + offset,
        message,
    };
    let open = body.find('[').unwrap_or(0);
    let close = body.find(']').ok_or_else(|| err(0, "unterminated matrix, missing `]`".into()))?;
    if !body[close + 1..].trim().is_empty() {
        return Err(err(close + 1, "unexpected text after `]`".into()));
    }
    let inner = &body[open + 1..close];
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = open + 1;
    for row in inner.split(';') {
        let mut vals = Vec::new();
        let mut col = offset;
        for tok in row.split(|c: char| c.is_whitespace() || c == ',') {
            if !tok.is_empty() {
                let pos = row[col - offset..].find(tok).map(|k| k + col).unwrap_or(col);
                let v: f64 = tok
                    .parse()
                    .map_err(|_| err(pos, format!("invalid number `{tok}`")))?;
                if !v.is_finite() {
                    return Err(err(pos, format!("non-finite number `{tok}`")));
                }
                vals.push(v);
                col = pos + tok.len();
            }
        }
        offset += row.len() + 1;
        if !vals.is_empty() {
            rows.push(vals);
        }
    }
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ncols = rows[0].len();
    if let Some(k) = rows.iter().position(|r| r.len() != ncols) {
        return Err(err(
            0,
            format!("row {} has {} entries, expected {ncols}", k + 1, rows[k].len()),
        ));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Formats a matrix as `[a b; c d]` with 17 significant digits.
pub fn format_matrix<T: Real>(m: &DMatrix<T>) -> String {
    let mut s = String::from("[");
    for i in 0..m.nrows() {
        if i > 0 {
            s.push_str("; ");
        }
        for j in 0..m.ncols() {
            if j > 0 {
                s.push(' ');
            }
            write!(s, "{:.16e}", m[(i, j)].as_f64()).unwrap();
        }
    }
    s.push(']');
    s
}

fn to_t<T: Real>(m: DMatrix<f64>) -> DMatrix<T> {
    m.map(T::lit)
}

pub fn parse_system<T: Real>(text: &str) -> Result<LtiSystem<T>> {
    let doc = Document::parse(text)?;
    let mut sys = LtiSystem::new(
        to_t(doc.matrix("A")?),
        to_t(doc.matrix("B_u")?),
        to_t(doc.matrix("B_w")?),
        to_t(doc.matrix("Q")?),
        to_t(doc.matrix("R")?),
    )?;
    sys.name = doc.text("name").map(str::to_string);
    Ok(sys)
}

pub fn format_system<T: Real>(sys: &LtiSystem<T>) -> String {
    let mut s = String::new();
    if let Some(name) = &sys.name {
        writeln!(s, "name = {name}").unwrap();
    }
    for (key, m) in [("A", &sys.a), ("B_u", &sys.b_u), ("B_w", &sys.b_w), ("Q", &sys.q), ("R", &sys.r)] {
        writeln!(s, "{key} = {}", format_matrix(m)).unwrap();
    }
    s
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_system<T: Real>(path: impl AsRef<Path>) -> Result<LtiSystem<T>> {
    parse_system(&read(path.as_ref())?)
}

pub fn save_system<T: Real>(sys: &LtiSystem<T>, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_system(sys))
}

pub use crate::synthesis::{ControllerFile, FeedbackForm, TransferForm};

fn sized<T: Real>(m: DMatrix<f64>, rows: usize, cols: usize, key: &str) -> Result<DMatrix<T>> {
    if m.is_empty() && rows * cols == 0 {
        return Ok(DMatrix::zeros(rows, cols));
    }
    if m.shape() != (rows, cols) {
        return Err(ModelError::DimensionMismatch(format!(
            "{key} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(to_t(m))
}

pub fn parse_controller<T: Real>(text: &str) -> Result<ControllerFile<T>> {
    let doc = Document::parse(text)?;
    let kind = doc.text("kind").ok_or_else(|| ModelError::MissingKey("kind".into()))?;
    let states = doc.count("states")?;
    let inputs = doc.count("inputs")?;
    let outputs = doc.count("outputs")?;
    let pick = |given: Option<usize>, m: &DMatrix<f64>, from_rows: bool, what: &str| -> Result<usize> {
        match given {
            Some(v) => Ok(v),
            None if !m.is_empty() => Ok(if from_rows { m.nrows() } else { m.ncols() }),
            None => Err(ModelError::MissingKey(what.into())),
        }
    };
    match kind {
        "feedback" => {
            let ac = doc.matrix("Ac")?;
            let bc = doc.matrix("Bc")?;
            let cc = doc.matrix("Cc")?;
            let dx = doc.matrix("Dx")?;
            let k = pick(states, &ac, true, "states")?;
            let p = pick(outputs, &dx, true, "outputs")?;
            let n = pick(None, &dx, false, "Dx")?;
            Ok(ControllerFile::Feedback(FeedbackForm {
                ac: sized(ac, k, k, "Ac")?,
                bc: sized(bc, k, n, "Bc")?,
                cc: sized(cc, p, k, "Cc")?,
                dx: sized(dx, p, n, "Dx")?,
            }))
        }
        "transfer" => {
            let ak = doc.matrix("Ak")?;
            let bk = doc.matrix("Bk")?;
            let ck = doc.matrix("Ck")?;
            let k = pick(states, &ak, true, "states")?;
            let m = pick(inputs, &bk, false, "inputs")?;
            let p = pick(outputs, &ck, true, "outputs")?;
            Ok(ControllerFile::Transfer(TransferForm {
                ak: sized(ak, k, k, "Ak")?,
                bk: sized(bk, k, m, "Bk")?,
                ck: sized(ck, p, k, "Ck")?,
            }))
        }
        other => {
            let line = doc.get("kind").map(|e| e.line).unwrap_or(0);
            Err(ModelError::Parse {
                line,
                column: 1,
                message: format!("unknown controller kind `{other}` (expected feedback or transfer)"),
            })
        }
    }
}

pub fn format_controller<T: Real>(c: &ControllerFile<T>) -> String {
    let mut s = String::new();
    match c {
        ControllerFile::Feedback(f) => {
            writeln!(s, "kind = feedback").unwrap();
            writeln!(s, "states = {}", f.ac.nrows()).unwrap();
            writeln!(s, "outputs = {}", f.dx.nrows()).unwrap();
            for (key, m) in [("Ac", &f.ac), ("Bc", &f.bc), ("Cc", &f.cc), ("Dx", &f.dx)] {
                writeln!(s, "{key} = {}", format_matrix(m)).unwrap();
            }
        }
        ControllerFile::Transfer(t) => {
            writeln!(s, "kind = transfer").unwrap();
            writeln!(s, "states = {}", t.ak.nrows()).unwrap();
            writeln!(s, "inputs = {}", t.bk.ncols()).unwrap();
            writeln!(s, "outputs = {}", t.ck.nrows()).unwrap();
            for (key, m) in [("Ak", &t.ak), ("Bk", &t.bk), ("Ck", &t.ck)] {
                writeln!(s, "{key} = {}", format_matrix(m)).unwrap();
            }
        }
    }
    s
}

pub fn load_controller<T: Real>(path: impl AsRef<Path>) -> Result<ControllerFile<T>> {
    parse_controller(&read(path.as_ref())?)
}

pub fn save_controller<T: Real>(c: &ControllerFile<T>, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &format_controller(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    const SCALAR: &str = "# running example\nname = scalar\nA = [0.5]\nB_u = [1]\nB_w = [1]\nQ = [1]\nR = [1]\n";

    #[test]
    fn parses_minimal_scalar_file() {
        let sys: LtiSystem<f64> = parse_system(SCALAR).unwrap();
        assert_eq!(sys, LtiSystem::scalar(0.5, 1.0, 1.0, 1.0, 1.0).unwrap().with_name("scalar"));
    }

    #[test]
    fn missing_q_is_reported() {
        let text = SCALAR.replace("Q = [1]\n", "");
        let err = parse_system::<f64>(&text).unwrap_err();
        assert_eq!(err.to_string(), "parse error: missing key Q");
    }

    #[test]
    fn bad_number_has_position() {
        let err = parse_system::<f64>("A = [0.5 x1]\n").unwrap_err();
        match err {
            ModelError::Parse { line, column, .. } => {
                assert_eq!(line, 1);
                assert_eq!(column, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(matches!(
            parse_system::<f64>("A = [1 2; 3]\n"),
            Err(ModelError::Parse { .. })
        ));
    }

    #[test]
    fn multiline_matrix() {
        let doc = Document::parse("A = [1 2\n 3 4]\n").unwrap();
        assert_eq!(doc.matrix("A").unwrap(), dmatrix![1.0, 2.0; 3.0, 4.0]);
    }

    #[test]
    fn normalize_examples() {
        let sys = LtiSystem::<f64>::scalar(0.5, 2.0, 1.0, 1.0, 4.0).unwrap();
        let n = sys.normalize_r().unwrap();
        assert!((n.b_u[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(n.r[(0, 0)], 1.0);

        let sys = LtiSystem::new(
            DMatrix::identity(2, 2) * 0.5,
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            dmatrix![1.0, 0.0; 0.0, 4.0],
        )
        .unwrap();
        let n = sys.normalize_r().unwrap();
        assert!((&n.b_u - dmatrix![1.0, 0.0; 0.0, 0.5]).norm() < 1e-15);
        assert_eq!(n.normalize_r().unwrap(), n);
    }

    #[test]
    fn validation_examples() {
        let sys = LtiSystem::scalar(0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
        let rep = validate(&sys);
        assert!(rep.passed(), "{rep}");

        let dup = LtiSystem::new(
            DMatrix::identity(2, 2) * 0.5,
            dmatrix![1.0; 0.0],
            dmatrix![1.0, 1.0; 1.0, 1.0],
            DMatrix::identity(2, 2),
            dmatrix![1.0],
        )
        .unwrap();
        let rep = validate(&dup);
        assert!(!rep.get(CheckKind::BwFullColumnRank).unwrap().passed);

        let circ = LtiSystem::scalar(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let rep = validate(&circ);
        let c = rep.get(CheckKind::NoUnitCircleEigenvalue).unwrap();
        assert!(!c.passed);
        assert!(c.witness.abs() < 1e-12);
    }

    #[test]
    fn unstabilizable_is_flagged() {
        let sys = LtiSystem::new(
            dmatrix![1.5, 0.0; 0.0, 0.5],
            dmatrix![0.0; 1.0],
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            dmatrix![1.0],
        )
        .unwrap();
        assert!(!validate(&sys).get(CheckKind::Stabilizable).unwrap().passed);
    }

    #[test]
    fn controller_round_trip_with_empty_state() {
        let c = ControllerFile::Feedback(FeedbackForm::<f64> {
            ac: DMatrix::zeros(0, 0),
            bc: DMatrix::zeros(0, 3),
            cc: DMatrix::zeros(2, 0),
            dx: DMatrix::from_fn(2, 3, |i, j| (i + 2 * j) as f64 / 7.0),
        });
        let back: ControllerFile<f64> = parse_controller(&format_controller(&c)).unwrap();
        assert_eq!(back, c);
    }
}
