//! Objective bindings: synthetic benchmark functions and external commands
//! speaking a one-line JSON protocol.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use adaptive_smbo::adaptive::Objective;
use adaptive_smbo::space::{Dimension, DimensionKind, ParamSpace, Point};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    Sphere,
    Branin,
    Hartmann6,
    MixedIntDemo,
}

/// Global minimum of Branin, attained at (-π, 12.275), (π, 2.275) and (9.42478, 2.475).
pub const BRANIN_MINIMUM: f64 = 0.397_887_357_729_738;

pub const HARTMANN6_MINIMUM: f64 = -3.322_368_011_415_51;

pub const HARTMANN6_ARGMIN: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];

/// Configuration at which `mixed_int_demo` is exactly zero.
pub const MIXED_INT_TARGET: [f64; 5] = [31.0, 20.0, 100.0, 0.8, 0.6];

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

const HARTMANN_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];

const HARTMANN_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn branin(x: &[f64]) -> f64 {
    use std::f64::consts::PI;
    let (x1, x2) = (x[0], x[1]);
    let b = 5.1 / (4.0 * PI * PI);
    let c = 5.0 / PI;
    let t = 1.0 / (8.0 * PI);
    (x2 - b * x1 * x1 + c * x1 - 6.0).powi(2) + 10.0 * (1.0 - t) * x1.cos() + 10.0
}

pub fn hartmann6(x: &[f64]) -> f64 {
    -(0..4)
        .map(|i| {
            let inner: f64 = (0..6).map(|j| HARTMANN_A[i][j] * (x[j] - HARTMANN_P[i][j]).powi(2)).sum();
            HARTMANN_ALPHA[i] * (-inner).exp()
        })
        .sum::<f64>()
}

impl Builtin {
    pub fn name(self) -> &'static str {
        match self {
            Builtin::Sphere => "sphere",
            Builtin::Branin => "branin",
            Builtin::Hartmann6 => "hartmann6",
            Builtin::MixedIntDemo => "mixed_int_demo",
        }
    }

    /// Conventional search space. `sphere` defaults to three dimensions.
    pub fn default_space(self) -> ParamSpace {
        let dims = match self {
            Builtin::Sphere => (1..=3).map(|i| Dimension::real(format!("x{i}"), -5.12, 5.12)).collect(),
            Builtin::Branin => vec![Dimension::real("x1", -5.0, 10.0), Dimension::real("x2", 0.0, 15.0)],
            Builtin::Hartmann6 => (1..=6).map(|i| Dimension::real(format!("x{i}"), 0.0, 1.0)).collect(),
            Builtin::MixedIntDemo => vec![
                Dimension::integer("num_leaves", 4, 100),
                Dimension::integer("min_child_samples", 1, 100),
                Dimension::integer("n_estimators", 1, 100),
                Dimension::real("subsample", 0.1, 1.0),
                Dimension::real("colsample_bytree", 0.1, 1.0),
            ],
        };
        ParamSpace::new(dims.into_iter().collect::<Result<Vec<_>, _>>().expect("builtin bounds are valid"))
            .expect("builtin space is valid")
    }

    /// Fixed dimensionality, if any.
    pub fn arity(self) -> Option<usize> {
        match self {
            Builtin::Sphere => None,
            Builtin::Branin => Some(2),
            Builtin::Hartmann6 => Some(6),
            Builtin::MixedIntDemo => Some(5),
        }
    }

    pub fn check_space(self, space: &ParamSpace) -> anyhow::Result<()> {
        if let Some(d) = self.arity() {
            if space.len() != d {
                bail!("builtin `{}` takes {d} dimensions, the space has {}", self.name(), space.len());
            }
        }
        Ok(())
    }

    pub fn evaluate(self, space: &ParamSpace, point: &Point) -> f64 {
        let x = point.values();
        match self {
            Builtin::Sphere => sphere(x),
            Builtin::Branin => branin(x),
            Builtin::Hartmann6 => hartmann6(x),
            Builtin::MixedIntDemo => {
                let u = space.normalize(point).expect("points come from the space");
                let target = space.normalize(&Point(MIXED_INT_TARGET.to_vec())).expect("target lies in the space");
                u.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum()
            }
        }
    }
}

impl std::str::FromStr for Builtin {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "sphere" => Builtin::Sphere,
            "branin" => Builtin::Branin,
            "hartmann6" => Builtin::Hartmann6,
            "mixed_int_demo" => Builtin::MixedIntDemo,
            other => bail!("unknown builtin objective `{other}` (expected sphere, branin, hartmann6 or mixed_int_demo)"),
        })
    }
}

/// Serializes `point` as an object keyed by dimension name, with integer
/// dimensions written as JSON integers.
pub fn request_json(space: &ParamSpace, point: &Point) -> serde_json::Value {
    let map = space
        .dims()
        .iter()
        .zip(point.values())
        .map(|(d, &v)| {
            let value = match d.kind {
                DimensionKind::Integer => serde_json::Value::from(v as i64),
                DimensionKind::Real => serde_json::Value::from(v),
            };
            (d.name.clone(), value)
        })
        .collect();
    serde_json::Value::Object(map)
}

#[derive(Deserialize)]
struct Reply {
    objective: f64,
}

/// Runs `command` once per evaluation: one JSON request line on stdin, one
/// `{"objective": <number>}` line expected on stdout.
#[derive(Debug, Clone)]
pub struct ExternalObjective {
    pub command: Vec<String>,
    pub timeout: Duration,
    pub space: ParamSpace,
}

impl ExternalObjective {
    pub fn call(&self, point: &Point) -> anyhow::Result<f64> {
        let (program, args) = self.command.split_first().context("empty objective command")?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .with_context(|| format!("failed to spawn `{program}`"))?;

        let mut stdout = child.stdout.take().expect("stdout is piped");
        let mut stderr = child.stderr.take().expect("stderr is piped");
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let mut line = request_json(&self.space, point).to_string();
        line.push('\n');
        if let Some(mut stdin) = child.stdin.take() {
            // A command that exits without reading its input is judged by its reply.
            let _ = stdin.write_all(line.as_bytes());
        }

        let deadline = Instant::now() + self.timeout;
        let status = loop {
            if let Some(status) = child.try_wait().context("waiting for objective command")? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                bail!("objective command timed out after {:?}", self.timeout);
            }
            thread::sleep(Duration::from_millis(2));
        };
        let out = out_reader.join().map_err(|_| anyhow::anyhow!("stdout reader panicked"))??;
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            bail!("objective command exited with {status}: {}", err.trim());
        }
        let reply = out.lines().find(|l| !l.trim().is_empty()).context("objective command replied with nothing")?;
        let reply: Reply =
            serde_json::from_str(reply).with_context(|| format!("malformed objective reply `{}`", reply.trim()))?;
        Ok(reply.objective)
    }
}

/// An objective bound to its search space.
#[derive(Debug, Clone)]
pub enum BoundObjective {
    Builtin { builtin: Builtin, space: ParamSpace },
    External(ExternalObjective),
}

impl Objective for BoundObjective {
    fn evaluate(&self, point: &Point) -> Result<f64, String> {
        match self {
            BoundObjective::Builtin { builtin, space } => Ok(builtin.evaluate(space, point)),
            BoundObjective::External(ext) => ext.call(point).map_err(|e| format!("{e:#}")),
        }
    }
}
