//! Problem files: loading, structural validation and the canonical hash.
//!
//! ```json
//! {
//!   "dim": 2,
//!   "rank": 2,
//!   "domain": { "lower": [-1, -1], "upper": [1, 1], "gridPerAxis": 9 },
//!   "connection": [[["0", "0"], ["0", "0"]], [["0", "x1"], ["0", "0"]]],
//!   "metric": [["1", "0"], ["0", "1"]],
//!   "seed": 0
//! }
//! ```
//!
//! `connection[i][a][b]` is the coefficient of the `b`-th frame element in
//! the covariant derivative of the `a`-th along `∂_{i+1}`. `metric`, `gauge`,
//! `dualConnection` and `tolerances` are optional.

use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use metron_core::bundle::{ChartDomain, Connection, GaugeTransform, MetricField};
use metron_core::expr::{parse_in_dim, Expr, MAX_VARS};
use metron_core::tolerances::Tolerances;

const DEFAULT_GRID: usize = 9;

const KNOWN_FIELDS: [&str; 9] =
    ["dim", "rank", "domain", "connection", "metric", "gauge", "dualConnection", "tolerances", "seed"];

const FLOAT_TOLERANCES: [&str; 5] = ["kernel", "transport", "rank", "substitution", "witness"];
const INTEGER_TOLERANCES: [&str; 3] = ["maxOrder", "stepsPerEdge", "rankDraws"];

/// One problem with a problem file, located by a JSON path such as
/// `connection[1][0][1]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

/// Expressions of one `rows×cols` matrix, already normalized.
type Block = Vec<Vec<String>>;

/// A validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub dim: usize,
    pub rank: usize,
    pub domain: ChartDomain,
    pub connection: Connection,
    pub metric: Option<MetricField>,
    pub gauge: Option<GaugeTransform>,
    pub dual_connection: Option<Connection>,
    /// Tolerance overrides from the file, on top of the defaults.
    pub tolerances: Tolerances,
    pub seed: u64,
    /// SHA-256 of the canonical form, in hex.
    pub hash: String,
}

/// Reads and validates a problem file. On failure every diagnostic found is
/// returned.
pub fn load(path: &Path) -> Result<Problem, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new("", format!("cannot read {}: {e}", path.display()))])?;
    parse(&text)
}

/// [`load`] on a string.
pub fn parse(text: &str) -> Result<Problem, Vec<Diagnostic>> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        vec![Diagnostic::new(
            "",
            format!("malformed JSON at line {}, column {}: {e}", e.line(), e.column()),
        )]
    })?;
    from_value(&value)
}

/// All diagnostics for a problem file; empty when it is valid.
pub fn validate(path: &Path) -> Vec<Diagnostic> {
    load(path).err().unwrap_or_default()
}

struct Checker {
    diagnostics: Vec<Diagnostic>,
}

impl Checker {
    fn error(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.diagnostics.push(Diagnostic::new(path, message));
    }

    fn integer(&mut self, v: Option<&Value>, path: &str, min: u64) -> Option<u64> {
        match v {
            None => {
                self.error(path, "missing field");
                None
            }
            Some(v) => match v.as_u64() {
                Some(n) if n >= min => Some(n),
                _ => {
                    self.error(path, format!("expected an integer >= {min}, found {v}"));
                    None
                }
            },
        }
    }

    fn numbers(&mut self, v: Option<&Value>, path: &str, len: Option<usize>) -> Option<Vec<f64>> {
        let Some(arr) = v.and_then(Value::as_array) else {
            self.error(path, "expected an array of numbers");
            return None;
        };
        if let Some(n) = len {
            if arr.len() != n {
                self.error(path, format!("expected {n} entries, found {}", arr.len()));
                return None;
            }
        }
        let mut out = Vec::with_capacity(arr.len());
        let mut ok = true;
        for (k, x) in arr.iter().enumerate() {
            match x.as_f64() {
                Some(f) => out.push(f),
                None => {
                    self.error(format!("{path}[{k}]"), format!("expected a number, found {x}"));
                    ok = false;
                }
            }
        }
        ok.then_some(out)
    }

    /// A `rows×cols` array of expression strings in `dim` variables,
    /// normalized through the parser.
    fn block(&mut self, v: &Value, path: &str, rows: usize, cols: usize, dim: usize) -> Option<Block> {
        let Some(arr) = v.as_array() else {
            self.error(path, format!("expected a {rows}x{cols} array of expression strings"));
            return None;
        };
        if arr.len() != rows {
            self.error(path, format!("expected {rows} rows, found {}", arr.len()));
            return None;
        }
        let mut out = Vec::with_capacity(rows);
        let mut ok = true;
        for (a, row) in arr.iter().enumerate() {
            let row_path = format!("{path}[{a}]");
            let Some(row) = row.as_array() else {
                self.error(row_path, format!("expected an array of {cols} expression strings"));
                ok = false;
                continue;
            };
            if row.len() != cols {
                self.error(row_path, format!("expected {cols} entries, found {}", row.len()));
                ok = false;
                continue;
            }
            let mut parsed = Vec::with_capacity(cols);
            for (b, entry) in row.iter().enumerate() {
                let entry_path = format!("{path}[{a}][{b}]");
                match entry {
                    Value::String(s) => match parse_in_dim(s, dim) {
                        Ok(e) => parsed.push(normalized(&e)),
                        Err(e) => {
                            self.error(entry_path, format!("{e} in `{s}`"));
                            ok = false;
                        }
                    },
                    // plain numbers are accepted for convenience
                    Value::Number(n) => parsed.push(normalized(&Expr::constant(n.as_f64().unwrap_or(f64::NAN)))),
                    other => {
                        self.error(entry_path, format!("expected an expression string, found {other}"));
                        ok = false;
                    }
                }
            }
            out.push(parsed);
        }
        ok.then_some(out)
    }

    fn blocks(&mut self, v: &Value, path: &str, m: usize, r: usize) -> Option<Vec<Block>> {
        let Some(arr) = v.as_array() else {
            self.error(path, format!("expected an array of {m} {r}x{r} blocks"));
            return None;
        };
        if arr.len() != m {
            self.error(path, format!("expected {m} blocks (one per coordinate), found {}", arr.len()));
            return None;
        }
        let parsed: Vec<Option<Block>> =
            arr.iter().enumerate().map(|(i, b)| self.block(b, &format!("{path}[{i}]"), r, r, m)).collect();
        parsed.into_iter().collect()
    }

    fn tolerances(&mut self, v: Option<&Value>) -> Option<Map<String, Value>> {
        let Some(v) = v else {
            return Some(Map::new());
        };
        let Some(obj) = v.as_object() else {
            self.error("tolerances", "expected an object");
            return None;
        };
        let mut ok = true;
        for (key, value) in obj {
            let path = format!("tolerances.{key}");
            if FLOAT_TOLERANCES.contains(&key.as_str()) {
                if !value.as_f64().is_some_and(|x| x > 0.0 && x.is_finite()) {
                    self.error(path, format!("expected a positive number, found {value}"));
                    ok = false;
                }
            } else if INTEGER_TOLERANCES.contains(&key.as_str()) {
                if !value.as_u64().is_some_and(|n| n >= 1) {
                    self.error(path, format!("expected a positive integer, found {value}"));
                    ok = false;
                }
            } else {
                self.error(path, "unknown tolerance");
                ok = false;
            }
        }
        ok.then(|| obj.clone())
    }
}

fn normalized(e: &Expr) -> String {
    e.to_string()
}

fn apply_overrides(overrides: &Map<String, Value>, grid: usize) -> Tolerances {
    let mut t = Tolerances {
        grid,
        ..Tolerances::default()
    };
    for (key, value) in overrides {
        let (f, n) = (value.as_f64().unwrap_or_default(), value.as_u64().unwrap_or_default() as usize);
        match key.as_str() {
            "kernel" => t.kernel = f,
            "transport" => t.transport = f,
            "rank" => t.rank = f,
            "substitution" => t.substitution = f,
            "witness" => t.witness = f,
            "maxOrder" => t.max_order = n,
            "stepsPerEdge" => t.steps_per_edge = n,
            "rankDraws" => t.rank_draws = n,
            _ => {}
        }
    }
    t
}

fn from_value(value: &Value) -> Result<Problem, Vec<Diagnostic>> {
    let mut c = Checker { diagnostics: Vec::new() };
    let Some(obj) = value.as_object() else {
        return Err(vec![Diagnostic::new("", "expected a JSON object at the top level")]);
    };
    for key in obj.keys() {
        if !KNOWN_FIELDS.contains(&key.as_str()) {
            c.error(key.clone(), "unknown field");
        }
    }
    let dim = c.integer(obj.get("dim"), "dim", 1).map(|d| d as usize);
    if let Some(d) = dim {
        if d > MAX_VARS {
            c.error("dim", format!("at most {MAX_VARS} coordinates are supported"));
        }
    }
    let dim = dim.filter(|&d| d <= MAX_VARS);
    let rank = c.integer(obj.get("rank"), "rank", 1).map(|r| r as usize);
    let seed = match obj.get("seed") {
        None => Some(0),
        Some(v) => c.integer(Some(v), "seed", 0),
    };

    let domain = match obj.get("domain").and_then(Value::as_object) {
        None => {
            c.error("domain", "expected an object with lower, upper and gridPerAxis");
            None
        }
        Some(d) => {
            for key in d.keys() {
                if !["lower", "upper", "gridPerAxis"].contains(&key.as_str()) {
                    c.error(format!("domain.{key}"), "unknown field");
                }
            }
            let lower = c.numbers(d.get("lower"), "domain.lower", dim);
            let upper = c.numbers(d.get("upper"), "domain.upper", dim);
            let grid = match d.get("gridPerAxis") {
                None => Some(DEFAULT_GRID as u64),
                Some(v) => c.integer(Some(v), "domain.gridPerAxis", 3),
            };
            match (lower, upper, grid) {
                (Some(lo), Some(hi), Some(n)) if dim.is_some() => match ChartDomain::new(lo, hi, n as usize) {
                    Ok(d) => Some(d),
                    Err(e) => {
                        c.error("domain", e.to_string());
                        None
                    }
                },
                _ => None,
            }
        }
    };

    let (Some(m), Some(r)) = (dim, rank) else {
        return Err(c.diagnostics);
    };
    let connection = match obj.get("connection") {
        None => {
            c.error("connection", "missing field");
            None
        }
        Some(v) => c.blocks(v, "connection", m, r),
    };
    let metric = obj.get("metric").map(|v| c.block(v, "metric", r, r, m));
    let gauge = obj.get("gauge").map(|v| c.block(v, "gauge", r, r, m));
    let dual = obj.get("dualConnection").map(|v| c.blocks(v, "dualConnection", m, r));
    let overrides = c.tolerances(obj.get("tolerances"));

    let (Some(domain), Some(connection), Some(overrides), Some(seed)) = (domain, connection, overrides, seed) else {
        return Err(c.diagnostics);
    };
    if !c.diagnostics.is_empty() {
        return Err(c.diagnostics);
    }
    // invalid optional blocks were diagnosed above
    let (metric, gauge, dual) = (metric.flatten(), gauge.flatten(), dual.flatten());

    let canonical = serde_json::json!({
        "dim": m,
        "rank": r,
        "domain": {
            "lower": domain.lower(),
            "upper": domain.upper(),
            "gridPerAxis": domain.samples_per_axis(),
        },
        "connection": connection,
        "metric": metric,
        "gauge": gauge,
        "dualConnection": dual,
        "tolerances": overrides,
        "seed": seed,
    });
    let hash = format!("{:x}", Sha256::digest(crate::json::to_compact_string(&canonical).as_bytes()));

    // Semantic checks: the objects must build and evaluate on the domain.
    let points = domain.sample_points();
    let built_connection = Connection::from_strings(domain.clone(), r, &connection)
        .map_err(|e| Diagnostic::new("connection", e.to_string()))
        .and_then(|conn| {
            check_finite(&points, |x| conn.eval(x).map(|v| v.concat_values()), "connection")?;
            Ok(conn)
        });
    let built_metric = metric.as_ref().map(|g| {
        MetricField::from_strings(domain.clone(), g)
            .map_err(|e| Diagnostic::new("metric", e.to_string()))
            .and_then(|g| {
                check_finite(&points, |x| g.eval(x).map(|v| v.as_slice().to_vec()), "metric")?;
                Ok(g)
            })
    });
    let built_gauge = gauge.as_ref().map(|p| {
        GaugeTransform::from_strings(domain.clone(), p)
            .map_err(|e| Diagnostic::new("gauge", e.to_string()))
            .and_then(|p| {
                check_finite(&points, |x| p.eval(x).map(|v| v.as_slice().to_vec()), "gauge")?;
                p.check_invertible().map_err(|e| Diagnostic::new("gauge", e.to_string()))?;
                Ok(p)
            })
    });
    let built_dual = dual.as_ref().map(|d| {
        Connection::from_strings(domain.clone(), r, d)
            .map_err(|e| Diagnostic::new("dualConnection", e.to_string()))
            .and_then(|conn| {
                check_finite(&points, |x| conn.eval(x).map(|v| v.concat_values()), "dualConnection")?;
                Ok(conn)
            })
    });

    fn take<T>(diagnostics: &mut Vec<Diagnostic>, r: Result<T, Diagnostic>) -> Option<T> {
        r.map_err(|d| diagnostics.push(d)).ok()
    }
    let connection = take(&mut c.diagnostics, built_connection);
    let metric = built_metric.map(|r| take(&mut c.diagnostics, r));
    let gauge = built_gauge.map(|r| take(&mut c.diagnostics, r));
    let dual_connection = built_dual.map(|r| take(&mut c.diagnostics, r));
    if !c.diagnostics.is_empty() {
        return Err(c.diagnostics);
    }
    Ok(Problem {
        dim: m,
        rank: r,
        tolerances: apply_overrides(&overrides, domain.samples_per_axis()),
        domain,
        connection: connection.expect("checked"),
        metric: metric.flatten(),
        gauge: gauge.flatten(),
        dual_connection: dual_connection.flatten(),
        seed,
        hash,
    })
}

trait ConcatValues {
    fn concat_values(&self) -> Vec<f64>;
}

impl ConcatValues for Vec<nalgebra::DMatrix<f64>> {
    fn concat_values(&self) -> Vec<f64> {
        self.iter().flat_map(|m| m.iter().copied()).collect()
    }
}

fn check_finite(
    points: &[Vec<f64>],
    eval: impl Fn(&[f64]) -> metron_core::Result<Vec<f64>>,
    path: &str,
) -> Result<(), Diagnostic> {
    for x in points {
        let values = eval(x).map_err(|e| Diagnostic::new(path, e.to_string()))?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Diagnostic::new(path, format!("not finite at {x:?}")));
        }
    }
    Ok(())
}

/// Reads a metric family file: a JSON array of `r×r` arrays of expression
/// strings, interpreted over `domain`.
pub fn load_metric_family(path: &Path, domain: &ChartDomain, rank: usize) -> Result<Vec<MetricField>, Vec<Diagnostic>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new("", format!("cannot read {}: {e}", path.display()))])?;
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        vec![Diagnostic::new(
            "",
            format!("malformed JSON at line {}, column {}: {e}", e.line(), e.column()),
        )]
    })?;
    let Some(arr) = value.as_array() else {
        return Err(vec![Diagnostic::new("", "expected an array of metric matrices")]);
    };
    let mut c = Checker { diagnostics: Vec::new() };
    let mut out = Vec::new();
    for (k, v) in arr.iter().enumerate() {
        let path = format!("[{k}]");
        if let Some(block) = c.block(v, &path, rank, rank, domain.dim()) {
            match MetricField::from_strings(domain.clone(), &block) {
                Ok(g) => out.push(g),
                Err(e) => c.error(path, e.to_string()),
            }
        }
    }
    if c.diagnostics.is_empty() {
        Ok(out)
    } else {
        Err(c.diagnostics)
    }
}
