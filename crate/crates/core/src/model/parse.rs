//! Robot description files: a TOML schema of `[[link]]`, `[[joint]]` and
//! `[[foot]]` tables. Structural mistakes (unknown names, cycles, double
//! parents) are reported with the line of the offending entry.

use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use super::{FootSpec, JointKind, JointSpec, LinkSpec, ModelError, RobotModel};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Syntax(#[from] toml::de::Error),
    #[error("line {line}: {source}")]
    Entry { line: usize, source: ModelError },
    #[error(transparent)]
    Structure(#[from] ModelError),
    #[error("line {line}: {message}")]
    Field { line: usize, message: String },
}

fn default_gravity() -> [f64; 3] {
    [0.0, 0.0, -9.81]
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    name: String,
    #[serde(default = "default_gravity")]
    gravity: [f64; 3],
    #[serde(default, rename = "link")]
    links: Vec<RawLink>,
    #[serde(default, rename = "joint")]
    joints: Vec<RawJoint>,
    #[serde(default, rename = "foot")]
    feet: Vec<RawFoot>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    name: Spanned<String>,
    mass: f64,
    #[serde(default)]
    com: [f64; 3],
    inertia: InertiaSpec,
}

/// Rotational inertia about the COM: three principal values, or the six
/// distinct entries of the symmetric tensor.
#[derive(Deserialize)]
#[serde(untagged)]
enum InertiaSpec {
    Diagonal([f64; 3]),
    Full {
        ixx: f64,
        iyy: f64,
        izz: f64,
        #[serde(default)]
        ixy: f64,
        #[serde(default)]
        ixz: f64,
        #[serde(default)]
        iyz: f64,
    },
}

impl InertiaSpec {
    fn matrix(&self) -> Matrix3<f64> {
        match *self {
            InertiaSpec::Diagonal([x, y, z]) => {
                Matrix3::from_diagonal(&Vector3::new(x, y, z))
            }
            InertiaSpec::Full { ixx, iyy, izz, ixy, ixz, iyz } => {
                Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz)
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawJoint {
    child: Spanned<String>,
    #[serde(default)]
    parent: Option<Spanned<String>>,
    kind: Spanned<String>,
    #[serde(default)]
    axis: Option<[f64; 3]>,
    /// Joint frame origin in the parent link frame.
    #[serde(default)]
    origin: [f64; 3],
    /// Fixed roll-pitch-yaw of the joint frame in the parent link frame.
    #[serde(default)]
    rpy: [f64; 3],
    #[serde(default)]
    torque_limit: Option<f64>,
    #[serde(default)]
    actuated: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFoot {
    link: Spanned<String>,
    #[serde(default)]
    offset: [f64; 3],
}

fn line_of(src: &str, byte: usize) -> usize {
    src.as_bytes().iter().take(byte).filter(|&&b| b == b'\n').count() + 1
}

/// Span of the entry a structural error refers to, when one exists.
fn error_span(raw: &RawModel, err: &ModelError) -> Option<std::ops::Range<usize>> {
    let joint_child = |name: &str| {
        raw.joints.iter().find(|j| j.child.get_ref() == name).map(|j| j.child.span())
    };
    match err {
        ModelError::UnknownLink(name) => raw
            .joints
            .iter()
            .find_map(|j| {
                j.parent
                    .as_ref()
                    .filter(|p| p.get_ref() == name)
                    .map(|p| p.span())
            })
            .or_else(|| joint_child(name)),
        ModelError::MultipleParents(name, _) => raw
            .joints
            .iter()
            .filter(|j| j.child.get_ref() == name)
            .nth(1)
            .map(|j| j.child.span()),
        ModelError::MultipleRoots(_, second) => raw
            .joints
            .iter()
            .filter(|j| j.parent.is_none())
            .find(|j| j.child.get_ref() == second)
            .map(|j| j.child.span()),
        ModelError::Disconnected(name)
        | ModelError::FloatingNotRoot(name)
        | ModelError::BadAxis(name)
        | ModelError::BadTorqueLimit(name, _)
        | ModelError::ActuatedFloating(name) => joint_child(name),
        ModelError::BadMass(name, _) | ModelError::BadInertia(name) => raw
            .links
            .iter()
            .find(|l| l.name.get_ref() == name)
            .map(|l| l.name.span()),
        ModelError::DuplicateLink(name) => raw
            .links
            .iter()
            .filter(|l| l.name.get_ref() == name)
            .nth(1)
            .map(|l| l.name.span()),
        ModelError::UnknownFootLink(name) => raw
            .feet
            .iter()
            .find(|f| f.link.get_ref() == name)
            .map(|f| f.link.span()),
        _ => None,
    }
}

impl RobotModel {
    pub fn from_toml_str(src: &str) -> Result<RobotModel, ParseError> {
        let raw: RawModel = toml::from_str(src)?;

        let links: Vec<LinkSpec> = raw
            .links
            .iter()
            .map(|l| LinkSpec {
                name: l.name.get_ref().clone(),
                mass: l.mass,
                com: Vector3::from(l.com),
                inertia: l.inertia.matrix(),
            })
            .collect();

        let mut joints = Vec::with_capacity(raw.joints.len());
        for j in &raw.joints {
            let kind_line = line_of(src, j.kind.span().start);
            let kind = match j.kind.get_ref().as_str() {
                "floating" => JointKind::Floating,
                "revolute" | "prismatic" => {
                    let axis = j.axis.map(Vector3::from).ok_or_else(|| ParseError::Field {
                        line: kind_line,
                        message: format!(
                            "`{}` joint onto `{}` needs an `axis`",
                            j.kind.get_ref(),
                            j.child.get_ref()
                        ),
                    })?;
                    if j.kind.get_ref() == "revolute" {
                        JointKind::Revolute { axis }
                    } else {
                        JointKind::Prismatic { axis }
                    }
                }
                other => {
                    return Err(ParseError::Field {
                        line: kind_line,
                        message: format!(
                            "unknown joint kind `{other}` (expected floating, revolute or prismatic)"
                        ),
                    });
                }
            };
            let actuated = j.actuated.unwrap_or(!matches!(kind, JointKind::Floating));
            let [roll, pitch, yaw] = j.rpy;
            joints.push(JointSpec {
                kind,
                parent: j.parent.as_ref().map(|p| p.get_ref().clone()),
                child: j.child.get_ref().clone(),
                placement: Isometry3::from_parts(
                    Translation3::new(j.origin[0], j.origin[1], j.origin[2]),
                    UnitQuaternion::from_euler_angles(roll, pitch, yaw),
                ),
                actuated,
                torque_limit: j.torque_limit,
            });
        }

        let feet: Vec<FootSpec> = raw
            .feet
            .iter()
            .map(|f| FootSpec { link: f.link.get_ref().clone(), offset: Vector3::from(f.offset) })
            .collect();

        match RobotModel::new(raw.name.clone(), links, joints, feet) {
            Ok(model) => Ok(model.with_gravity(Vector3::from(raw.gravity))),
            Err(err) => match error_span(&raw, &err) {
                Some(span) => {
                    Err(ParseError::Entry { line: line_of(src, span.start), source: err })
                }
                None => Err(ParseError::Structure(err)),
            },
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RobotModel, ParseError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Built-in 12-joint quadruped used by the demos and tests.
    pub fn reference_quadruped() -> RobotModel {
        Self::from_toml_str(include_str!("../../assets/quadruped.toml"))
            .expect("embedded quadruped model is valid")
    }
}
