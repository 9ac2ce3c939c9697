//! Experiment configuration: a flat `[section]` / `key = value` text format.
//!
//! Numbers accept constant expressions (`5*pi/6`), shapes are nested calls
//! such as `csg_difference(circle(0, 0, 0.9), circle(0.45, 0, 0.7))` and
//! potentials are named forms or expressions in `x`, `y`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use gpe_levelset::flow::{FlowConfig, InitPolicy, ModelKind, ModelSpec, TimeStep, HOI_TIME_STEP};
use gpe_levelset::geometry::{build_level_set, classify, GeometryOptions, Grid2D, Shape};
use gpe_levelset::linalg::PreconditionerKind;
use gpe_levelset::operators::Potential;
use thiserror::Error;

use crate::expr::{Expr, ExprError, Parser, Tok};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {column}: {kind}")]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub kind: ConfigErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("unknown key '{key}' in [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("duplicate key '{0}'")]
    DuplicateKey(String),
    #[error("missing required field '{0}'")]
    MissingField(String),
    #[error("malformed shape expression: {0}")]
    MalformedShape(String),
    #[error("invalid value for '{key}': {message}")]
    InvalidValue { key: String, message: String },
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("experiment", &["name", "description"]),
    ("domain", &["shape", "box"]),
    ("potential", &["v"]),
    ("model", &["kind", "beta", "gamma", "delta", "rescale"]),
    ("grid", &["resolutions", "band_cells", "curvature_cap"]),
    (
        "flow",
        &["dt", "tol_phase1", "tol_phase2", "max_steps", "init", "continuation_rungs", "preconditioner"],
    ),
    ("reference", &["mu", "energy", "source", "fit", "scale", "note"]),
    ("excited", &["index"]),
    ("output", &["dir"]),
];

/// Domain description, kept symbolic so it can be echoed back.
#[derive(Clone, Debug, PartialEq)]
pub enum ShapeExpr {
    Circle { cx: f64, cy: f64, r: f64 },
    Ellipse { cx: f64, cy: f64, a: f64, b: f64 },
    Rectangle { x0: f64, y0: f64, x1: f64, y1: f64 },
    LShape { outer: [f64; 4], removed: [f64; 4] },
    Sector { cx: f64, cy: f64, r: f64, start: f64, opening: f64 },
    Polygon(Vec<[f64; 2]>),
    Difference(Box<ShapeExpr>, Box<ShapeExpr>),
    Intersection(Box<ShapeExpr>, Box<ShapeExpr>),
    /// Level-set callback `phi(x, y)`, negative inside.
    LevelSet(Expr),
}

impl ShapeExpr {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let mut p = Parser::new(text)?;
        let s = parse_shape(&mut p)?;
        p.finish()?;
        Ok(s)
    }

    pub fn to_shape(&self) -> Shape {
        match self {
            ShapeExpr::Circle { cx, cy, r } => Shape::circle(*cx, *cy, *r),
            ShapeExpr::Ellipse { cx, cy, a, b } => Shape::Ellipse {
                center: [*cx, *cy],
                semi_x: *a,
                semi_y: *b,
            },
            ShapeExpr::Rectangle { x0, y0, x1, y1 } => Shape::rectangle(*x0, *y0, *x1, *y1),
            ShapeExpr::LShape { outer, removed } => Shape::LShape {
                outer: ([outer[0], outer[1]], [outer[2], outer[3]]),
                removed: ([removed[0], removed[1]], [removed[2], removed[3]]),
            },
            ShapeExpr::Sector { cx, cy, r, start, opening } => Shape::Sector {
                center: [*cx, *cy],
                radius: *r,
                start: *start,
                opening: *opening,
            },
            ShapeExpr::Polygon(v) => Shape::Polygon { vertices: v.clone() },
            ShapeExpr::Difference(a, b) => Shape::difference(a.to_shape(), b.to_shape()),
            ShapeExpr::Intersection(a, b) => Shape::intersection(a.to_shape(), b.to_shape()),
            ShapeExpr::LevelSet(e) => {
                let e = Arc::new(e.clone());
                Shape::analytic(move |x, y| e.eval(x, y))
            }
        }
    }

    /// Axis-aligned bounds `[x0, y0, x1, y1]`, when known.
    pub fn bounds(&self) -> Option<[f64; 4]> {
        Some(match self {
            ShapeExpr::Circle { cx, cy, r } => [cx - r, cy - r, cx + r, cy + r],
            ShapeExpr::Ellipse { cx, cy, a, b } => [cx - a, cy - b, cx + a, cy + b],
            ShapeExpr::Rectangle { x0, y0, x1, y1 } => [*x0, *y0, *x1, *y1],
            ShapeExpr::LShape { outer, .. } => *outer,
            ShapeExpr::Sector { cx, cy, r, .. } => [cx - r, cy - r, cx + r, cy + r],
            ShapeExpr::Polygon(v) => v.iter().fold(
                [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY],
                |b, p| [b[0].min(p[0]), b[1].min(p[1]), b[2].max(p[0]), b[3].max(p[1])],
            ),
            ShapeExpr::Difference(a, _) => a.bounds()?,
            ShapeExpr::Intersection(a, b) => {
                let (a, b) = (a.bounds()?, b.bounds()?);
                [a[0].max(b[0]), a[1].max(b[1]), a[2].min(b[2]), a[3].min(b[3])]
            }
            ShapeExpr::LevelSet(_) => return None,
        })
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for ShapeExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ShapeExpr::Circle { cx, cy, r } => write!(f, "circle({})", join(&[*cx, *cy, *r])),
            ShapeExpr::Ellipse { cx, cy, a, b } => write!(f, "ellipse({})", join(&[*cx, *cy, *a, *b])),
            ShapeExpr::Rectangle { x0, y0, x1, y1 } => write!(f, "rectangle({})", join(&[*x0, *y0, *x1, *y1])),
            ShapeExpr::LShape { outer, removed } => {
                write!(f, "l_shape({}, {})", join(outer), join(removed))
            }
            ShapeExpr::Sector { cx, cy, r, start, opening } => {
                write!(f, "sector({})", join(&[*cx, *cy, *r, *start, *opening]))
            }
            ShapeExpr::Polygon(v) => {
                let flat: Vec<f64> = v.iter().flat_map(|p| [p[0], p[1]]).collect();
                write!(f, "polygon({})", join(&flat))
            }
            ShapeExpr::Difference(a, b) => write!(f, "csg_difference({a}, {b})"),
            ShapeExpr::Intersection(a, b) => write!(f, "csg_intersection({a}, {b})"),
            ShapeExpr::LevelSet(e) => write!(f, "level_set({e})"),
        }
    }
}

fn const_args(p: &mut Parser) -> Result<Vec<f64>, ExprError> {
    let mut out = Vec::new();
    if p.peek() == Some(&Tok::RParen) {
        return Ok(out);
    }
    loop {
        let col = p.column();
        let e = p.expr()?;
        let v = e.eval_const().ok_or_else(|| ExprError {
            column: col,
            message: "shape parameters must be constants".into(),
        })?;
        out.push(v);
        if p.peek() == Some(&Tok::Comma) {
            p.next();
        } else {
            return Ok(out);
        }
    }
}

fn parse_shape(p: &mut Parser) -> Result<ShapeExpr, ExprError> {
    let col = p.column();
    let name = match p.next() {
        Some(Tok::Ident(n)) => n,
        _ => {
            return Err(ExprError {
                column: col,
                message: "expected a shape name".into(),
            })
        }
    };
    p.expect(Tok::LParen, "'(' after shape name")?;
    let shape = match name.as_str() {
        "csg_difference" | "csg_intersection" => {
            let a = parse_shape(p)?;
            p.expect(Tok::Comma, "',' between the two CSG operands")?;
            let b = parse_shape(p)?;
            if name == "csg_difference" {
                ShapeExpr::Difference(Box::new(a), Box::new(b))
            } else {
                ShapeExpr::Intersection(Box::new(a), Box::new(b))
            }
        }
        "level_set" => ShapeExpr::LevelSet(p.expr()?),
        _ => {
            let args = const_args(p)?;
            let bad = |want: &str| ExprError {
                column: col,
                message: format!("{name} takes {want}, got {} arguments", args.len()),
            };
            match (name.as_str(), args.len()) {
                ("circle", 3) => ShapeExpr::Circle {
                    cx: args[0],
                    cy: args[1],
                    r: args[2],
                },
                ("circle", _) => return Err(bad("(cx, cy, r)")),
                ("ellipse", 2) => ShapeExpr::Ellipse {
                    cx: 0.0,
                    cy: 0.0,
                    a: args[0],
                    b: args[1],
                },
                ("ellipse", 4) => ShapeExpr::Ellipse {
                    cx: args[0],
                    cy: args[1],
                    a: args[2],
                    b: args[3],
                },
                ("ellipse", _) => return Err(bad("(a, b) or (cx, cy, a, b)")),
                ("rectangle", 4) => ShapeExpr::Rectangle {
                    x0: args[0],
                    y0: args[1],
                    x1: args[2],
                    y1: args[3],
                },
                ("rectangle", _) => return Err(bad("(x0, y0, x1, y1)")),
                ("l_shape", 8) => ShapeExpr::LShape {
                    outer: [args[0], args[1], args[2], args[3]],
                    removed: [args[4], args[5], args[6], args[7]],
                },
                ("l_shape", _) => return Err(bad("an outer box and a removed box (8 numbers)")),
                ("sector", 5) => ShapeExpr::Sector {
                    cx: args[0],
                    cy: args[1],
                    r: args[2],
                    start: args[3],
                    opening: args[4],
                },
                ("sector", _) => return Err(bad("(cx, cy, r, start, opening)")),
                ("polygon", n) if n >= 6 && n % 2 == 0 => {
                    ShapeExpr::Polygon(args.chunks(2).map(|c| [c[0], c[1]]).collect())
                }
                ("polygon", _) => return Err(bad("at least three vertices as x, y pairs")),
                _ => {
                    return Err(ExprError {
                        column: col,
                        message: format!("unknown shape '{name}'"),
                    })
                }
            }
        }
    };
    p.expect(Tok::RParen, "')'")?;
    Ok(shape)
}

/// Trapping potential: a named form with parameters or an expression.
#[derive(Clone, Debug, PartialEq)]
pub enum PotentialSpec {
    /// `V = 0`: confinement by the domain only.
    Box,
    Harmonic { gx: f64, gy: f64 },
    HarmonicLattice { amplitude: f64, wavenumber: f64 },
    GaussianObstacle { amplitude: f64, cx: f64, cy: f64, ax: f64, ay: f64 },
    QuantumPendulum { wavenumber: f64 },
    EllipseShaped { amplitude: f64, a: f64, b: f64, offset: f64 },
    Expression(Expr),
}

impl PotentialSpec {
    pub fn parse(text: &str) -> Result<Self, ExprError> {
        let mut p = Parser::new(text)?;
        let (name, col) = match p.peek() {
            Some(Tok::Ident(n)) => (n.clone(), p.column()),
            _ => return Ok(PotentialSpec::Expression(Expr::parse(text)?)),
        };
        let defaults: &[f64] = match name.as_str() {
            "box" | "zero" => &[],
            "harmonic" => &[1.0, 1.0],
            "harmonic_lattice" => &[50.0, std::f64::consts::PI],
            "gaussian_obstacle" => &[4.0, -0.35, 0.0, 2.0, 1.0],
            "quantum_pendulum" => &[2.0 * std::f64::consts::PI],
            "ellipse_shaped" => &[4.0, 2.0, 1.5, 0.3],
            _ => return Ok(PotentialSpec::Expression(Expr::parse(text)?)),
        };
        p.next();
        let args = if p.peek() == Some(&Tok::LParen) {
            p.next();
            let a = const_args(&mut p)?;
            p.expect(Tok::RParen, "')'")?;
            if a.is_empty() {
                defaults.to_vec()
            } else {
                a
            }
        } else {
            defaults.to_vec()
        };
        p.finish()?;
        if args.len() != defaults.len() {
            return Err(ExprError {
                column: col,
                message: format!("{name} takes {} parameters, got {}", defaults.len(), args.len()),
            });
        }
        Ok(match name.as_str() {
            "box" | "zero" => PotentialSpec::Box,
            "harmonic" => PotentialSpec::Harmonic { gx: args[0], gy: args[1] },
            "harmonic_lattice" => PotentialSpec::HarmonicLattice {
                amplitude: args[0],
                wavenumber: args[1],
            },
            "gaussian_obstacle" => PotentialSpec::GaussianObstacle {
                amplitude: args[0],
                cx: args[1],
                cy: args[2],
                ax: args[3],
                ay: args[4],
            },
            "quantum_pendulum" => PotentialSpec::QuantumPendulum { wavenumber: args[0] },
            _ => PotentialSpec::EllipseShaped {
                amplitude: args[0],
                a: args[1],
                b: args[2],
                offset: args[3],
            },
        })
    }

    pub fn to_potential(&self) -> Potential {
        match self {
            PotentialSpec::Box => Potential::Zero,
            PotentialSpec::Harmonic { gx, gy } => Potential::Harmonic { gx: *gx, gy: *gy },
            PotentialSpec::HarmonicLattice { amplitude, wavenumber } => Potential::HarmonicLattice {
                amplitude: *amplitude,
                wavenumber: *wavenumber,
            },
            PotentialSpec::GaussianObstacle { amplitude, cx, cy, ax, ay } => Potential::GaussianObstacle {
                amplitude: *amplitude,
                center: [*cx, *cy],
                ax: *ax,
                ay: *ay,
            },
            PotentialSpec::QuantumPendulum { wavenumber } => Potential::QuantumPendulum { wavenumber: *wavenumber },
            PotentialSpec::EllipseShaped { amplitude, a, b, offset } => Potential::EllipseShaped {
                amplitude: *amplitude,
                a: *a,
                b: *b,
                offset: *offset,
            },
            PotentialSpec::Expression(e) => {
                let f = Arc::new(e.clone());
                Potential::custom(e.to_string(), move |x, y| f.eval(x, y))
            }
        }
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Box => f.write_str("box"),
            PotentialSpec::Harmonic { gx, gy } => write!(f, "harmonic({})", join(&[*gx, *gy])),
            PotentialSpec::HarmonicLattice { amplitude, wavenumber } => {
                write!(f, "harmonic_lattice({})", join(&[*amplitude, *wavenumber]))
            }
            PotentialSpec::GaussianObstacle { amplitude, cx, cy, ax, ay } => {
                write!(f, "gaussian_obstacle({})", join(&[*amplitude, *cx, *cy, *ax, *ay]))
            }
            PotentialSpec::QuantumPendulum { wavenumber } => write!(f, "quantum_pendulum({wavenumber:?})"),
            PotentialSpec::EllipseShaped { amplitude, a, b, offset } => {
                write!(f, "ellipse_shaped({})", join(&[*amplitude, *a, *b, *offset]))
            }
            PotentialSpec::Expression(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceSource {
    Literature,
    Analytic,
    /// The literature value belongs to a domain whose parameters are not
    /// stated; it is recorded but never asserted.
    GeometryUnderspecified,
    None,
}

impl ReferenceSource {
    pub fn label(self) -> &'static str {
        match self {
            ReferenceSource::Literature => "literature",
            ReferenceSource::Analytic => "analytic",
            ReferenceSource::GeometryUnderspecified => "geometry-underspecified",
            ReferenceSource::None => "none",
        }
    }
}

/// Reference used when fitting convergence rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateFit {
    /// Errors against the configured reference value.
    Reference,
    /// Errors against the finest resolution, which is left out of the fit.
    SelfFinest,
}

impl RateFit {
    pub fn label(self) -> &'static str {
        match self {
            RateFit::Reference => "reference",
            RateFit::SelfFinest => "self-finest",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    /// Reference value of the reported quantity `scale * mu`.
    pub mu: Option<f64>,
    pub energy: Option<f64>,
    pub source: ReferenceSource,
    pub fit: RateFit,
    /// The reported value is `scale * mu` (2 for a `-Laplace` eigenvalue).
    pub scale: f64,
    pub note: String,
}

impl Default for Reference {
    fn default() -> Self {
        Self {
            mu: None,
            energy: None,
            source: ReferenceSource::None,
            fit: RateFit::SelfFinest,
            scale: 1.0,
            note: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub description: String,
    pub shape: ShapeExpr,
    /// Computational box `[x0, y0, x1, y1]`.
    pub bbox: [f64; 4],
    pub potential: PotentialSpec,
    pub model: ModelSpec,
    pub rescale: Option<bool>,
    /// Strictly decreasing grid spacings.
    pub resolutions: Vec<f64>,
    pub band_cells: f64,
    pub curvature_cap: Option<f64>,
    pub time_step: TimeStep,
    pub tol_phase1: f64,
    pub tol_phase2: f64,
    pub max_steps: usize,
    pub init: InitPolicy,
    pub continuation_rungs: usize,
    pub preconditioner: PreconditionerKind,
    pub reference: Reference,
    pub excited: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

struct Entry {
    value: String,
    line: usize,
    key_col: usize,
    value_col: usize,
}

struct Entries {
    map: BTreeMap<(String, String), Entry>,
    sections: BTreeMap<String, usize>,
    last_line: usize,
}

impl Entries {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.map.get(&(section.to_string(), key.to_string()))
    }

    fn missing(&self, section: &str, key: &str) -> ConfigError {
        let line = self.sections.get(section).copied().unwrap_or(self.last_line + 1);
        ConfigError {
            line,
            column: 1,
            kind: ConfigErrorKind::MissingField(format!("{section}.{key}")),
        }
    }
}

fn invalid(e: &Entry, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line: e.line,
        column: e.value_col,
        kind: ConfigErrorKind::InvalidValue {
            key: key.into(),
            message: message.into(),
        },
    }
}

fn expr_error(e: &Entry, key: &str, err: ExprError) -> ConfigError {
    ConfigError {
        line: e.line,
        column: e.value_col + err.column - 1,
        kind: ConfigErrorKind::InvalidValue {
            key: key.into(),
            message: err.message,
        },
    }
}

fn scan(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    let mut sections = BTreeMap::new();
    let mut section: Option<String> = None;
    let mut last_line = 0;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        last_line = line;
        let indent = raw.len() - raw.trim_start().len();
        let t = raw.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
            continue;
        }
        if let Some(rest) = t.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or(ConfigError {
                line,
                column: indent + t.len(),
                kind: ConfigErrorKind::Syntax("section header must end with ']'".into()),
            })?;
            let name = name.trim().to_string();
            if !SCHEMA.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError {
                    line,
                    column: indent + 2,
                    kind: ConfigErrorKind::UnknownSection(name),
                });
            }
            sections.entry(name.clone()).or_insert(line);
            section = Some(name);
            continue;
        }
        let eq = raw.find('=').ok_or(ConfigError {
            line,
            column: indent + 1,
            kind: ConfigErrorKind::Syntax("expected 'key = value' or '[section]'".into()),
        })?;
        let key = raw[..eq].trim().to_string();
        let key_col = indent + 1;
        let sec = section.clone().ok_or(ConfigError {
            line,
            column: key_col,
            kind: ConfigErrorKind::Syntax("key outside of any section".into()),
        })?;
        let allowed = SCHEMA.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key.as_str()) {
            return Err(ConfigError {
                line,
                column: key_col,
                kind: ConfigErrorKind::UnknownKey { section: sec, key },
            });
        }
        let after = &raw[eq + 1..];
        let value_col = eq + 2 + (after.len() - after.trim_start().len());
        let entry = Entry {
            value: after.trim().to_string(),
            line,
            key_col,
            value_col,
        };
        if let Some(prev) = map.insert((sec, key.clone()), entry) {
            let _ = prev;
            return Err(ConfigError {
                line,
                column: key_col,
                kind: ConfigErrorKind::DuplicateKey(key),
            });
        }
    }
    Ok(Entries {
        map,
        sections,
        last_line,
    })
}

fn number(e: &Entry, key: &str) -> Result<f64, ConfigError> {
    let v = Expr::parse_const(&e.value).map_err(|err| expr_error(e, key, err))?;
    if !v.is_finite() {
        return Err(invalid(e, key, format!("{v} is not finite")));
    }
    Ok(v)
}

fn numbers(e: &Entry, key: &str) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::new();
    let mut offset = 0;
    for part in e.value.split(',') {
        let lead = part.len() - part.trim_start().len();
        let sub = Entry {
            value: part.trim().to_string(),
            line: e.line,
            key_col: e.key_col,
            value_col: e.value_col + offset + lead,
        };
        out.push(number(&sub, key)?);
        offset += part.len() + 1;
    }
    Ok(out)
}

fn optional_number(e: &Entry, key: &str) -> Result<Option<f64>, ConfigError> {
    if e.value == "none" {
        Ok(None)
    } else {
        number(e, key).map(Some)
    }
}

fn positive_int(e: &Entry, key: &str) -> Result<usize, ConfigError> {
    e.value
        .parse::<usize>()
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| invalid(e, key, "expected a positive integer"))
}

fn pick<T: Copy>(e: &Entry, key: &str, options: &[(&str, T)]) -> Result<T, ConfigError> {
    options
        .iter()
        .find(|(name, _)| *name == e.value)
        .map(|(_, v)| *v)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            invalid(e, key, format!("expected one of {}", names.join(", ")))
        })
}

const MODEL_KINDS: &[(&str, ModelKind)] = &[
    ("cubic", ModelKind::Cubic),
    ("cubic-rescaled", ModelKind::CubicRescaled),
    ("cubic-quintic", ModelKind::CubicQuintic),
    ("hoi-split", ModelKind::HoiSplit),
];
const RESCALE: &[(&str, Option<bool>)] = &[("auto", None), ("on", Some(true)), ("off", Some(false))];
const INIT: &[(&str, InitPolicy)] = &[
    ("auto", InitPolicy::Auto),
    ("linear", InitPolicy::Linear),
    ("thomas-fermi", InitPolicy::ThomasFermi),
    ("continuation", InitPolicy::Continuation),
];
const PRECONDITIONERS: &[(&str, PreconditionerKind)] = &[
    ("jacobi", PreconditionerKind::Jacobi),
    ("milu", PreconditionerKind::Milu),
    ("none", PreconditionerKind::None),
];
const SOURCES: &[(&str, ReferenceSource)] = &[
    ("literature", ReferenceSource::Literature),
    ("analytic", ReferenceSource::Analytic),
    ("geometry-underspecified", ReferenceSource::GeometryUnderspecified),
    ("none", ReferenceSource::None),
];
const FITS: &[(&str, RateFit)] = &[("reference", RateFit::Reference), ("self-finest", RateFit::SelfFinest)];

fn name_of<T: PartialEq + Copy>(options: &[(&'static str, T)], v: T) -> &'static str {
    options.iter().find(|(_, o)| *o == v).map(|(n, _)| *n).expect("every variant is listed")
}

fn parse_time_step(e: &Entry) -> Result<TimeStep, ConfigError> {
    let v = e.value.as_str();
    if v == "h" {
        return Ok(TimeStep::GridSpacing);
    }
    if let Some(factor) = v.strip_suffix('h') {
        let factor = factor.trim().trim_end_matches('*').trim();
        let sub = Entry {
            value: factor.to_string(),
            line: e.line,
            key_col: e.key_col,
            value_col: e.value_col,
        };
        let f = number(&sub, "dt")?;
        if !(f > 0.0) {
            return Err(invalid(e, "dt", "time step must be positive"));
        }
        return Ok(TimeStep::Multiple(f));
    }
    let dt = number(e, "dt")?;
    if !(dt > 0.0) {
        return Err(invalid(e, "dt", "time step must be positive"));
    }
    Ok(TimeStep::Fixed(dt))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let es = scan(text)?;
        let get = |s: &str, k: &str| es.get(s, k);
        let require = |s: &str, k: &str| es.get(s, k).ok_or_else(|| es.missing(s, k));

        let name = get("experiment", "name").map_or_else(|| "experiment".to_string(), |e| e.value.clone());
        let description = get("experiment", "description").map_or_else(String::new, |e| e.value.clone());

        let se = require("domain", "shape")?;
        let shape = ShapeExpr::parse(&se.value).map_err(|err| ConfigError {
            line: se.line,
            column: se.value_col + err.column - 1,
            kind: ConfigErrorKind::MalformedShape(err.message),
        })?;
        shape.to_shape().validate().map_err(|err| ConfigError {
            line: se.line,
            column: se.value_col,
            kind: ConfigErrorKind::MalformedShape(err.to_string()),
        })?;

        let bbox = match get("domain", "box") {
            Some(e) => {
                let v = numbers(e, "box")?;
                if v.len() != 4 || !(v[2] > v[0] && v[3] > v[1]) {
                    return Err(invalid(e, "box", "expected x0, y0, x1, y1 with x1 > x0 and y1 > y0"));
                }
                [v[0], v[1], v[2], v[3]]
            }
            None => {
                let b = shape.bounds().ok_or_else(|| es.missing("domain", "box"))?;
                // a quarter of the larger extent on every side
                let pad = 0.25 * (b[2] - b[0]).max(b[3] - b[1]);
                [b[0] - pad, b[1] - pad, b[2] + pad, b[3] + pad]
            }
        };

        let pe = require("potential", "v")?;
        let potential = PotentialSpec::parse(&pe.value).map_err(|err| expr_error(pe, "v", err))?;

        let kind = match get("model", "kind") {
            Some(e) => pick(e, "kind", MODEL_KINDS)?,
            None => ModelKind::Cubic,
        };
        let be = require("model", "beta")?;
        let beta = number(be, "beta")?;
        if beta < 0.0 {
            return Err(invalid(be, "beta", "beta must be >= 0: only defocusing (repulsive) interactions are supported"));
        }
        let coupling = |k: &str| -> Result<f64, ConfigError> {
            match get("model", k) {
                Some(e) => {
                    let v = number(e, k)?;
                    if v < 0.0 {
                        return Err(invalid(e, k, format!("{k} must be >= 0")));
                    }
                    Ok(v)
                }
                None => Ok(0.0),
            }
        };
        let model = ModelSpec {
            kind,
            beta,
            gamma: coupling("gamma")?,
            delta: coupling("delta")?,
        };
        if let Err(err) = model.validate() {
            let at = get("model", "kind").unwrap_or(be);
            return Err(invalid(at, "kind", err.to_string()));
        }
        let rescale = match get("model", "rescale") {
            Some(e) => pick(e, "rescale", RESCALE)?,
            None => None,
        };

        let resolutions = match get("grid", "resolutions") {
            Some(e) => {
                let v = numbers(e, "resolutions")?;
                if v.iter().any(|&h| !(h > 0.0)) {
                    return Err(invalid(e, "resolutions", "grid spacings must be positive"));
                }
                if v.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(invalid(e, "resolutions", "grid spacings must be strictly decreasing"));
                }
                v
            }
            None => {
                let l = (bbox[2] - bbox[0]).max(bbox[3] - bbox[1]);
                vec![l / 40.0, l / 80.0, l / 160.0]
            }
        };
        let band_cells = match get("grid", "band_cells") {
            Some(e) => {
                let v = number(e, "band_cells")?;
                if v < 3.0 {
                    return Err(invalid(e, "band_cells", "the band must be at least 3 cells wide"));
                }
                v
            }
            None => GeometryOptions::default().band_cells,
        };
        let curvature_cap = match get("grid", "curvature_cap") {
            Some(e) => {
                let v = optional_number(e, "curvature_cap")?;
                if v.is_some_and(|c| !(c > 0.0)) {
                    return Err(invalid(e, "curvature_cap", "cap must be positive"));
                }
                v
            }
            None => None,
        };

        let defaults = FlowConfig::for_model(&model);
        let time_step = match get("flow", "dt") {
            Some(e) => parse_time_step(e)?,
            None if kind == ModelKind::HoiSplit => TimeStep::Fixed(HOI_TIME_STEP),
            None => TimeStep::GridSpacing,
        };
        let tol = |k: &str, d: f64| -> Result<f64, ConfigError> {
            match get("flow", k) {
                Some(e) => {
                    let v = number(e, k)?;
                    if !(v > 0.0) {
                        return Err(invalid(e, k, "tolerance must be positive"));
                    }
                    Ok(v)
                }
                None => Ok(d),
            }
        };
        let tol_phase1 = tol("tol_phase1", defaults.tol_phase1)?;
        let tol_phase2 = tol("tol_phase2", defaults.tol_phase2)?;
        let max_steps = match get("flow", "max_steps") {
            Some(e) => positive_int(e, "max_steps")?,
            None => defaults.max_steps,
        };
        let init = match get("flow", "init") {
            Some(e) => pick(e, "init", INIT)?,
            None => InitPolicy::Auto,
        };
        let continuation_rungs = match get("flow", "continuation_rungs") {
            Some(e) => positive_int(e, "continuation_rungs")?,
            None => defaults.continuation_rungs,
        };
        let preconditioner = match get("flow", "preconditioner") {
            Some(e) => pick(e, "preconditioner", PRECONDITIONERS)?,
            None => defaults.solver.preconditioner,
        };

        let mut reference = Reference::default();
        if let Some(e) = get("reference", "mu") {
            reference.mu = optional_number(e, "mu")?;
        }
        if let Some(e) = get("reference", "energy") {
            reference.energy = optional_number(e, "energy")?;
        }
        if let Some(e) = get("reference", "source") {
            reference.source = pick(e, "source", SOURCES)?;
        }
        if let Some(e) = get("reference", "fit") {
            reference.fit = pick(e, "fit", FITS)?;
            if reference.fit == RateFit::Reference && reference.mu.is_none() {
                return Err(invalid(e, "fit", "fitting against the reference needs reference.mu"));
            }
        }
        if let Some(e) = get("reference", "scale") {
            reference.scale = number(e, "scale")?;
            if !(reference.scale > 0.0) {
                return Err(invalid(e, "scale", "scale must be positive"));
            }
        }
        if let Some(e) = get("reference", "note") {
            reference.note = e.value.clone();
        }

        let excited = match get("excited", "index") {
            Some(e) if e.value == "none" => None,
            Some(e) => Some(positive_int(e, "index")?),
            None => None,
        };
        let out_dir = get("output", "dir").map(|e| PathBuf::from(&e.value));

        let cfg = Self {
            name,
            description,
            shape,
            bbox,
            potential,
            model,
            rescale,
            resolutions,
            band_cells,
            curvature_cap,
            time_step,
            tol_phase1,
            tol_phase2,
            max_steps,
            init,
            continuation_rungs,
            preconditioner,
            reference,
            excited,
            out_dir,
        };
        if let Err(message) = cfg.check_margin() {
            let at = get("domain", "box").unwrap_or(se);
            return Err(invalid(at, "box", message));
        }
        Ok(cfg)
    }

    /// The box must keep every interior node at least two nodes away from the rim.
    fn check_margin(&self) -> Result<(), String> {
        let h = self.resolutions[0];
        let grid = Grid2D::covering([self.bbox[0], self.bbox[1]], [self.bbox[2], self.bbox[3]], h)
            .map_err(|e| e.to_string())?;
        let ls = build_level_set(&grid, &self.shape.to_shape()).map_err(|e| e.to_string())?;
        classify(&grid, &ls).map_err(|e| format!("box does not contain the domain with a 2-node margin at h = {h}: {e}"))?;
        Ok(())
    }

    /// Full configuration with every default filled in.
    pub fn to_text(&self) -> String {
        let f = |v: f64| format!("{v:?}");
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), f);
        let dt = match self.time_step {
            TimeStep::GridSpacing => "h".to_string(),
            TimeStep::Multiple(k) => format!("{k:?}h"),
            TimeStep::Fixed(v) => f(v),
        };
        let mut s = String::new();
        s += &format!("[experiment]\nname = {}\n", self.name);
        if !self.description.is_empty() {
            s += &format!("description = {}\n", self.description);
        }
        s += &format!("\n[domain]\nshape = {}\nbox = {}\n", self.shape, join(&self.bbox));
        s += &format!("\n[potential]\nv = {}\n", self.potential);
        s += &format!(
            "\n[model]\nkind = {}\nbeta = {}\ngamma = {}\ndelta = {}\nrescale = {}\n",
            name_of(MODEL_KINDS, self.model.kind),
            f(self.model.beta),
            f(self.model.gamma),
            f(self.model.delta),
            name_of(RESCALE, self.rescale)
        );
        s += &format!(
            "\n[grid]\nresolutions = {}\nband_cells = {}\ncurvature_cap = {}\n",
            join(&self.resolutions),
            f(self.band_cells),
            opt(self.curvature_cap)
        );
        s += &format!(
            "\n[flow]\ndt = {dt}\ntol_phase1 = {}\ntol_phase2 = {}\nmax_steps = {}\ninit = {}\ncontinuation_rungs = {}\npreconditioner = {}\n",
            f(self.tol_phase1),
            f(self.tol_phase2),
            self.max_steps,
            name_of(INIT, self.init),
            self.continuation_rungs,
            name_of(PRECONDITIONERS, self.preconditioner)
        );
        let r = &self.reference;
        s += &format!(
            "\n[reference]\nmu = {}\nenergy = {}\nsource = {}\nfit = {}\nscale = {}\n",
            opt(r.mu),
            opt(r.energy),
            name_of(SOURCES, r.source),
            name_of(FITS, r.fit),
            f(r.scale)
        );
        if !r.note.is_empty() {
            s += &format!("note = {}\n", r.note);
        }
        s += &format!(
            "\n[excited]\nindex = {}\n",
            self.excited.map_or_else(|| "none".to_string(), |k| k.to_string())
        );
        if let Some(dir) = &self.out_dir {
            s += &format!("\n[output]\ndir = {}\n", dir.display());
        }
        s
    }

    pub fn flow_config(&self) -> FlowConfig {
        let mut cfg = FlowConfig::for_model(&self.model);
        cfg.time_step = self.time_step;
        cfg.tol_phase1 = self.tol_phase1;
        cfg.tol_phase2 = self.tol_phase2;
        cfg.max_steps = self.max_steps;
        cfg.init = self.init;
        cfg.continuation_rungs = self.continuation_rungs;
        cfg.rescale = self.rescale;
        cfg.solver.preconditioner = self.preconditioner;
        cfg
    }

    pub fn geometry_options(&self) -> GeometryOptions {
        GeometryOptions {
            band_cells: self.band_cells,
            curvature_cap: self.curvature_cap,
        }
    }

    /// Applies `--tol-override` to both phases.
    pub fn override_tolerance(&mut self, tol: f64) {
        self.tol_phase1 = tol;
        self.tol_phase2 = tol;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[domain]\nshape = circle(0, 0, 1)\n[potential]\nv = harmonic\n[model]\nbeta = 10\n";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.time_step, TimeStep::GridSpacing);
        assert_eq!(c.model, ModelSpec::cubic(10.0));
        assert_eq!(c.potential, PotentialSpec::Harmonic { gx: 1.0, gy: 1.0 });
        assert_eq!(c.bbox, [-1.5, -1.5, 1.5, 1.5]);
        assert_eq!(c.resolutions.len(), 3);
        assert_eq!((c.tol_phase1, c.tol_phase2), (1e-8, 1e-8));
        assert_eq!(c.init, InitPolicy::Auto);
    }

    #[test]
    fn roundtrip_is_identity() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        let again = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_text(), c.to_text());
        let text = "[experiment]\nname = odd\n[domain]\nshape = csg_difference(circle(0,0,0.9), circle(0.45,0,0.7))\nbox = -pi/3, -pi/3, pi/3, pi/3\n\
                    [potential]\nv = 0.5*(x^2 + y^2) + sin(x)^2\n[model]\nkind = hoi-split\nbeta = 10\ndelta = 10\n\
                    [grid]\nresolutions = pi/90, pi/120, pi/180\ncurvature_cap = 0.5\n[flow]\ninit = continuation\n\
                    [reference]\nmu = 6.136\nenergy = none\nsource = literature\nfit = reference\nscale = 2\n[excited]\nindex = 1\n[output]\ndir = out/x\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.time_step, TimeStep::Fixed(HOI_TIME_STEP));
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn negative_beta_cites_defocusing() {
        let err = ExperimentConfig::parse(&MINIMAL.replace("beta = 10", "beta = -1")).unwrap_err();
        assert_eq!((err.line, err.column), (6, 8));
        assert!(err.to_string().contains("defocusing"), "{err}");
    }

    #[test]
    fn errors_carry_positions() {
        let err = ExperimentConfig::parse(&format!("{MINIMAL}colour = red\n")).unwrap_err();
        assert_eq!((err.line, err.column), (7, 1));
        assert!(matches!(err.kind, ConfigErrorKind::UnknownKey { .. }));

        let err = ExperimentConfig::parse(&MINIMAL.replace("circle(0, 0, 1)", "circle(0, 0, 1")).unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.column, 23);
        assert!(matches!(err.kind, ConfigErrorKind::MalformedShape(_)));

        let err = ExperimentConfig::parse(&MINIMAL.replace("circle(0, 0, 1)", "blob(1)")).unwrap_err();
        assert_eq!((err.line, err.column), (2, 9));

        let err = ExperimentConfig::parse("[domain]\nshape = circle(0,0,1)\n[model]\nbeta = 1\n").unwrap_err();
        assert_eq!(err.kind, ConfigErrorKind::MissingField("potential.v".into()));

        let err = ExperimentConfig::parse(&format!("{MINIMAL}[grid]\nresolutions = 0.1, 0.2\n")).unwrap_err();
        assert_eq!(err.line, 8);

        let err = ExperimentConfig::parse(&format!("{MINIMAL}[domain2]\n")).unwrap_err();
        assert!(matches!(err.kind, ConfigErrorKind::UnknownSection(_)));
    }

    #[test]
    fn box_must_leave_a_margin() {
        let text = format!("{MINIMAL}[grid]\nresolutions = 0.1\n").replace("[domain]\n", "[domain]\nbox = -1.05, -1.05, 1.05, 1.05\n");
        let err = ExperimentConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("margin"), "{err}");
    }

    #[test]
    fn shapes_and_potentials() {
        let s = ShapeExpr::parse("l_shape(-1, -1, 1, 1, 0, 0, 1, 1)").unwrap();
        assert_eq!(ShapeExpr::parse(&s.to_string()).unwrap(), s);
        let s = ShapeExpr::parse("csg_intersection(ellipse(1.5, 2), level_set(x - 0.5))").unwrap();
        let shape = s.to_shape();
        assert!(shape.signed_distance([0.0, 0.0]).unwrap() < 0.0);
        assert!(shape.signed_distance([0.9, 0.0]).unwrap() > 0.0);
        assert_eq!(ShapeExpr::parse(&s.to_string()).unwrap(), s);
        assert!(ShapeExpr::parse("circle(0, x, 1)").is_err());

        let p = PotentialSpec::parse("gaussian_obstacle").unwrap();
        assert_eq!(p.to_potential().peak(), Some([-0.35, 0.0]));
        let p = PotentialSpec::parse("4*exp(-2*(x+0.35)^2 - y^2)").unwrap();
        assert_eq!(p.to_potential().eval(-0.35, 0.0), 4.0);
        assert_eq!(PotentialSpec::parse(&p.to_string()).unwrap(), p);
        assert!(PotentialSpec::parse("harmonic(1)").is_err());
    }
}
