//! Flat `key = value` experiment configuration.
//!
//! One entry per line, `#` starts a comment line, unknown and repeated keys
//! are errors. Every key is optional; [`ExperimentConfig::to_config_string`]
//! writes all of them in a fixed order and parses back to an equal value.
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `command` | `ou-check`, `robustness`, `hyperbolic` or `wave` | unset |
//! | `seed` | root seed | `0` |
//! | `t_min`, `t_max`, `h` | report window and grid step | `-5`, `5`, `0.015625` |
//! | `tol` | fixed-point tolerance | `1e-10` |
//! | `tail_tol` | OU and Green-kernel tail tolerance | `1e-9` |
//! | `kappa` | `rational` (`1/(1+t²)`) or a positive constant | `rational` |
//! | `eta_grid` | comma-separated, strictly decreasing, in `[0, 1]` | `0.2,0.1,0.05,0.025,0` |
//! | `paths` | ensemble size for `ou-check` | `4000` |
//! | `variance_tol` | half-width of the accepted variance band around `1/2` | `0.05` |
//! | `injected_path` | `wiener`, `zero`, `linear` or `sine` | `wiener` |
//! | `scalar_base`, `scalar_perturbed` | scalar steps for `robustness` | `0.5`, `0.55` |
//! | `saddle_eps` | rotation size for the saddle `diag(1/2, 2)` | `0.01` |
//! | `matrix`, `matrix_perturbed` | optional user steps, rows split by `;` | unset |
//! | `model` | `cubic`, `additive` or `both` | `both` |
//! | `radius` | neighbourhood radius `r_U` | `0.5` |
//! | `n_modes`, `damping`, `f_linear` | wave system `u_tt + β u_t = u_xx + c u − u³` | `4`, `1`, `1` |
//! | `noise_shape` | `full`, `position` or `velocity` | `full` |
//! | `coordinates` | `energy` or `modal` | `energy` |
//! | `out` | output directory | unset (`--out` or `.`) |

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::noise::KappaFn;
use crate::sde_bridge::{NoiseShape, WaveCoordinates};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    OuCheck,
    Robustness,
    Hyperbolic,
    Wave,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::OuCheck => "ou-check",
            Command::Robustness => "robustness",
            Command::Hyperbolic => "hyperbolic",
            Command::Wave => "wave",
        }
    }
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ou-check" => Ok(Command::OuCheck),
            "robustness" => Ok(Command::Robustness),
            "hyperbolic" => Ok(Command::Hyperbolic),
            "wave" => Ok(Command::Wave),
            _ => Err("expected ou-check, robustness, hyperbolic or wave".into()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Kappa {
    Rational,
    Constant(f64),
}

impl Kappa {
    pub fn to_fn(self) -> KappaFn {
        match self {
            Kappa::Rational => KappaFn::Rational,
            Kappa::Constant(c) => KappaFn::Constant(c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InjectedPath {
    Wiener,
    Zero,
    Linear,
    Sine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelChoice {
    Cubic,
    Additive,
    Both,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: Option<Command>,
    pub seed: u64,
    pub t_min: f64,
    pub t_max: f64,
    pub h: f64,
    pub tol: f64,
    pub tail_tol: f64,
    pub kappa: Kappa,
    pub eta_grid: Vec<f64>,
    pub paths: usize,
    pub variance_tol: f64,
    pub injected_path: InjectedPath,
    pub scalar_base: f64,
    pub scalar_perturbed: f64,
    pub saddle_eps: f64,
    pub matrix: Option<Mat>,
    pub matrix_perturbed: Option<Mat>,
    pub model: ModelChoice,
    pub radius: f64,
    pub n_modes: usize,
    pub damping: f64,
    pub f_linear: f64,
    pub noise_shape: NoiseShape,
    pub coordinates: WaveCoordinates,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: None,
            seed: 0,
            t_min: -5.0,
            t_max: 5.0,
            h: 1.0 / 64.0,
            tol: 1e-10,
            tail_tol: 1e-9,
            kappa: Kappa::Rational,
            eta_grid: vec![0.2, 0.1, 0.05, 0.025, 0.0],
            paths: 4000,
            variance_tol: 0.05,
            injected_path: InjectedPath::Wiener,
            scalar_base: 0.5,
            scalar_perturbed: 0.55,
            saddle_eps: 0.01,
            matrix: None,
            matrix_perturbed: None,
            model: ModelChoice::Both,
            radius: 0.5,
            n_modes: 4,
            damping: 1.0,
            f_linear: 1.0,
            noise_shape: NoiseShape::Full,
            coordinates: WaveCoordinates::Energy,
            out: None,
        }
    }
}

fn num<T: FromStr>(v: &str, what: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("expected {what}, got `{v}`"))
}

fn float_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',').map(|x| num(x.trim(), "a number")).collect()
}

fn matrix(v: &str) -> std::result::Result<Mat, String> {
    let rows: Vec<Vec<f64>> = v.split(';').map(float_list).collect::<std::result::Result<_, _>>()?;
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) {
        return Err("matrix rows have different lengths".into());
    }
    if rows.len() != n {
        return Err(format!("matrix must be square, got {}×{n}", rows.len()));
    }
    Ok(Mat::from_row_iterator(n, n, rows.into_iter().flatten()))
}

fn format_matrix(m: &Mat) -> String {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| format!("{:?}", m[(i, j)])).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join(";")
}

fn choice<T: Copy>(v: &str, options: &[(&str, T)]) -> std::result::Result<T, String> {
    options
        .iter()
        .find(|(name, _)| *name == v)
        .map(|(_, x)| *x)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            format!("expected one of {}, got `{v}`", names.join(", "))
        })
}

const PATHS: [(&str, InjectedPath); 4] = [
    ("wiener", InjectedPath::Wiener),
    ("zero", InjectedPath::Zero),
    ("linear", InjectedPath::Linear),
    ("sine", InjectedPath::Sine),
];
const MODELS: [(&str, ModelChoice); 3] = [
    ("cubic", ModelChoice::Cubic),
    ("additive", ModelChoice::Additive),
    ("both", ModelChoice::Both),
];
const SHAPES: [(&str, NoiseShape); 3] = [
    ("full", NoiseShape::Full),
    ("position", NoiseShape::Position),
    ("velocity", NoiseShape::Velocity),
];
const COORDS: [(&str, WaveCoordinates); 2] = [
    ("energy", WaveCoordinates::Energy),
    ("modal", WaveCoordinates::Modal),
];

fn name_of<T: PartialEq + Copy>(x: T, options: &[(&'static str, T)]) -> &'static str {
    options.iter().find(|(_, v)| *v == x).map(|(n, _)| *n).unwrap_or("?")
}

impl ExperimentConfig {
    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "command" => self.command = Some(v.parse()?),
            "seed" => self.seed = num(v, "a non-negative integer")?,
            "t_min" => self.t_min = num(v, "a number")?,
            "t_max" => self.t_max = num(v, "a number")?,
            "h" => self.h = num(v, "a number")?,
            "tol" => self.tol = num(v, "a number")?,
            "tail_tol" => self.tail_tol = num(v, "a number")?,
            "kappa" => {
                self.kappa = if v == "rational" {
                    Kappa::Rational
                } else {
                    Kappa::Constant(num(v, "`rational` or a positive number")?)
                }
            }
            "eta_grid" => self.eta_grid = float_list(v)?,
            "paths" => self.paths = num(v, "a positive integer")?,
            "variance_tol" => self.variance_tol = num(v, "a number")?,
            "injected_path" => self.injected_path = choice(v, &PATHS)?,
            "scalar_base" => self.scalar_base = num(v, "a number")?,
            "scalar_perturbed" => self.scalar_perturbed = num(v, "a number")?,
            "saddle_eps" => self.saddle_eps = num(v, "a number")?,
            "matrix" => self.matrix = Some(matrix(v)?),
            "matrix_perturbed" => self.matrix_perturbed = Some(matrix(v)?),
            "model" => self.model = choice(v, &MODELS)?,
            "radius" => self.radius = num(v, "a number")?,
            "n_modes" => self.n_modes = num(v, "a positive integer")?,
            "damping" => self.damping = num(v, "a number")?,
            "f_linear" => self.f_linear = num(v, "a number")?,
            "noise_shape" => self.noise_shape = choice(v, &SHAPES)?,
            "coordinates" => self.coordinates = choice(v, &COORDS)?,
            "out" => self.out = Some(v.to_string()),
            _ => return Err("unknown field".into()),
        }
        Ok(())
    }

    /// Parses and validates a configuration file's contents.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let n = i + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {n}: expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!("line {n}: field `{key}` given twice")));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {n}: field `{key}`: {e}")))?;
            seen.push(key.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("field `{field}`: {msg}")));
        for (field, v) in [
            ("h", self.h),
            ("tol", self.tol),
            ("tail_tol", self.tail_tol),
            ("variance_tol", self.variance_tol),
            ("radius", self.radius),
            ("damping", self.damping),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(field, format!("must be a finite number > 0, got {v}"));
            }
        }
        if !(self.t_min < self.t_max) || !self.t_min.is_finite() || !self.t_max.is_finite() {
            return bad("t_max", format!("window [{}, {}] is empty", self.t_min, self.t_max));
        }
        if self.eta_grid.is_empty() {
            return bad("eta_grid", "must not be empty".into());
        }
        if let Some(e) = self.eta_grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return bad("eta_grid", format!("entries must lie in [0, 1], got {e}"));
        }
        if self.eta_grid.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eta_grid", "must be sorted in strictly decreasing order".into());
        }
        if let Kappa::Constant(c) = self.kappa {
            if !(c > 0.0 && c.is_finite()) {
                return bad("kappa", format!("constant must be > 0, got {c}"));
            }
        }
        if self.paths < 2 {
            return bad("paths", format!("need at least 2, got {}", self.paths));
        }
        if self.n_modes == 0 {
            return bad("n_modes", "must be at least 1".into());
        }
        match (&self.matrix, &self.matrix_perturbed) {
            (Some(a), Some(b)) if a.shape() != b.shape() => {
                bad("matrix_perturbed", "must have the same size as `matrix`".into())
            }
            (Some(_), None) => bad("matrix_perturbed", "required when `matrix` is given".into()),
            (None, Some(_)) => bad("matrix", "required when `matrix_perturbed` is given".into()),
            _ => Ok(()),
        }
    }

    /// Every field, one per line, in the order of the key table.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        if let Some(c) = self.command {
            put("command", c.name().into());
        }
        put("seed", self.seed.to_string());
        put("t_min", format!("{:?}", self.t_min));
        put("t_max", format!("{:?}", self.t_max));
        put("h", format!("{:?}", self.h));
        put("tol", format!("{:?}", self.tol));
        put("tail_tol", format!("{:?}", self.tail_tol));
        put(
            "kappa",
            match self.kappa {
                Kappa::Rational => "rational".into(),
                Kappa::Constant(c) => format!("{c:?}"),
            },
        );
        put(
            "eta_grid",
            self.eta_grid.iter().map(|e| format!("{e:?}")).collect::<Vec<_>>().join(","),
        );
        put("paths", self.paths.to_string());
        put("variance_tol", format!("{:?}", self.variance_tol));
        put("injected_path", name_of(self.injected_path, &PATHS).into());
        put("scalar_base", format!("{:?}", self.scalar_base));
        put("scalar_perturbed", format!("{:?}", self.scalar_perturbed));
        put("saddle_eps", format!("{:?}", self.saddle_eps));
        if let Some(m) = &self.matrix {
            put("matrix", format_matrix(m));
        }
        if let Some(m) = &self.matrix_perturbed {
            put("matrix_perturbed", format_matrix(m));
        }
        put("model", name_of(self.model, &MODELS).into());
        put("radius", format!("{:?}", self.radius));
        put("n_modes", self.n_modes.to_string());
        put("damping", format!("{:?}", self.damping));
        put("f_linear", format!("{:?}", self.f_linear));
        put("noise_shape", name_of(self.noise_shape, &SHAPES).into());
        put("coordinates", name_of(self.coordinates, &COORDS).into());
        if let Some(o) = &self.out {
            put("out", o.clone());
        }
        s
    }
}
