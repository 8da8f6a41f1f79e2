//! JSON file formats.
//!
//! ```text
//! PLD              {"atoms":[{"p":0.4,"y":0,"mass":0.25}, ...]}
//! task             {"points":[{"weight":0.5,"bayes":0.5,"prediction":0.4}, ...]}
//! loss             {"v_mixture":[{"v":0.5,"lambda":1.0}],"affine":{"a":0.0,"b":0.5}}
//! post-processing  {"pieces":[{"lo":0.0,"hi":1.0,"slope":1.0,"intercept":0.0}, ...]}
//! coupling         {"rows":[{"p":0.5,"q":0.45,"y":0,"mass":0.5}, ...]}
//! ```
//!
//! Numbers are written in shortest round-trip form, so every file re-parses
//! to bit-identical values. JSON has no NaN or infinity, and out-of-range
//! literals are rejected by the parser.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::constructions::{Companion, ConstructionOutput};
use crate::error::{CalibError, Result};
use crate::losses::{LinearPiece, PostProcessing, VComponent, VMixtureLoss};
use crate::pld::{Atom, FinitePredictionTask, Pld, TaskPoint};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomDto {
    p: f64,
    y: u8,
    mass: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PldFile {
    atoms: Vec<AtomDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDto {
    weight: f64,
    bayes: f64,
    prediction: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    points: Vec<PointDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentDto {
    v: f64,
    lambda: f64,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct AffineDto {
    a: f64,
    b: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossFile {
    v_mixture: Vec<ComponentDto>,
    #[serde(default)]
    affine: AffineDto,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PieceDto {
    lo: f64,
    hi: f64,
    slope: f64,
    intercept: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PostFile {
    pieces: Vec<PieceDto>,
}

#[derive(Serialize)]
struct CouplingRow {
    p: f64,
    q: f64,
    y: u8,
    mass: f64,
}

#[derive(Serialize)]
struct CouplingFile {
    rows: Vec<CouplingRow>,
}

#[derive(Serialize)]
struct ExpectedDto<'a> {
    value: f64,
    note: &'a str,
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CalibError::Parse(e.to_string()))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("file structs always serialize")
}

pub fn pld_from_json(text: &str) -> Result<Pld> {
    let f: PldFile = parse(text)?;
    Pld::new(f.atoms.into_iter().map(|a| Atom::new(a.p, a.y, a.mass)))
}

pub fn pld_to_json(pld: &Pld) -> String {
    to_json(&PldFile {
        atoms: pld
            .atoms()
            .iter()
            .map(|a| AtomDto {
                p: a.p,
                y: a.y,
                mass: a.mass,
            })
            .collect(),
    })
}

pub fn task_from_json(text: &str) -> Result<FinitePredictionTask> {
    let f: TaskFile = parse(text)?;
    FinitePredictionTask::new(
        f.points
            .into_iter()
            .map(|p| TaskPoint::new(p.weight, p.bayes, p.prediction)),
    )
}

pub fn task_to_json(task: &FinitePredictionTask) -> String {
    to_json(&TaskFile {
        points: task
            .points()
            .iter()
            .map(|p| PointDto {
                weight: p.weight,
                bayes: p.bayes,
                prediction: p.prediction,
            })
            .collect(),
    })
}

pub fn loss_from_json(text: &str) -> Result<VMixtureLoss> {
    let f: LossFile = parse(text)?;
    VMixtureLoss::new(
        f.v_mixture
            .into_iter()
            .map(|c| VComponent {
                v: c.v,
                lambda: c.lambda,
            })
            .collect(),
        f.affine.a,
        f.affine.b,
    )
}

pub fn loss_to_json(loss: &VMixtureLoss) -> String {
    let (a, b) = loss.affine();
    to_json(&LossFile {
        v_mixture: loss
            .components()
            .iter()
            .map(|c| ComponentDto {
                v: c.v,
                lambda: c.lambda,
            })
            .collect(),
        affine: AffineDto { a, b },
    })
}

pub fn postprocessing_from_json(text: &str) -> Result<PostProcessing> {
    let f: PostFile = parse(text)?;
    PostProcessing::new(
        f.pieces
            .into_iter()
            .map(|p| LinearPiece {
                lo: p.lo,
                hi: p.hi,
                slope: p.slope,
                intercept: p.intercept,
            })
            .collect(),
    )
}

pub fn postprocessing_to_json(kappa: &PostProcessing) -> String {
    to_json(&PostFile {
        pieces: kappa
            .all_pieces()
            .into_iter()
            .map(|p| PieceDto {
                lo: p.lo,
                hi: p.hi,
                slope: p.slope,
                intercept: p.intercept,
            })
            .collect(),
    })
}

fn coupling_to_json(rows: &[(f64, f64, u8, f64)]) -> String {
    to_json(&CouplingFile {
        rows: rows
            .iter()
            .map(|&(p, q, y, mass)| CouplingRow { p, q, y, mass })
            .collect(),
    })
}

pub fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CalibError::Io(format!("{}: {e}", path.display())))
}

pub fn read_pld(path: &Path) -> Result<Pld> {
    pld_from_json(&read_file(path)?)
}

pub fn read_task(path: &Path) -> Result<FinitePredictionTask> {
    task_from_json(&read_file(path)?)
}

pub fn read_loss(path: &Path) -> Result<VMixtureLoss> {
    loss_from_json(&read_file(path)?)
}

pub fn read_postprocessing(path: &Path) -> Result<PostProcessing> {
    postprocessing_from_json(&read_file(path)?)
}

/// Writes `<name>.pld.json`, `<name>.task.json` when the construction has a
/// task, and `<name>.<key>.<kind>.json` for each companion. Returns the paths
/// written.
pub fn write_construction(dir: &Path, out: &ConstructionOutput) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CalibError::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    let mut put = |file: String, body: String| -> Result<()> {
        let path = dir.join(file);
        write_file(&path, &body)?;
        written.push(path);
        Ok(())
    };
    put(format!("{}.pld.json", out.name), pld_to_json(&out.pld))?;
    if let Some(task) = &out.task {
        put(format!("{}.task.json", out.name), task_to_json(task))?;
    }
    for (key, c) in &out.companions {
        let (kind, body) = match c {
            Companion::Pld(p) => ("pld", pld_to_json(p)),
            Companion::Task(t) => ("task", task_to_json(t)),
            Companion::Loss(l) => ("loss", loss_to_json(l)),
            Companion::PostProcessing(k) => ("post", postprocessing_to_json(k)),
            Companion::Coupling(rows) => ("coupling", coupling_to_json(rows)),
        };
        put(format!("{}.{key}.{kind}.json", out.name), body)?;
    }
    Ok(written)
}

/// `{"<construction>": {"<key>": {"value": .., "note": ..}}}` for a batch of
/// constructions.
pub fn expected_manifest(outputs: &[ConstructionOutput]) -> String {
    let manifest: BTreeMap<&str, BTreeMap<&str, ExpectedDto<'_>>> = outputs
        .iter()
        .map(|o| {
            let entries = o
                .expected
                .iter()
                .map(|(k, e)| {
                    (
                        k.as_str(),
                        ExpectedDto {
                            value: e.value,
                            note: &e.note,
                        },
                    )
                })
                .collect();
            (o.name.as_str(), entries)
        })
        .collect();
    to_json(&manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pld_roundtrip() {
        let pld = Pld::new([(0.1 + 0.2, 1, 0.3), (0.7, 0, 0.7)]).unwrap();
        assert_eq!(pld_from_json(&pld_to_json(&pld)).unwrap(), pld);
    }

    #[test]
    fn rejects_non_numbers() {
        assert!(matches!(
            pld_from_json(r#"{"atoms":[{"p":NaN,"y":0,"mass":1}]}"#),
            Err(CalibError::Parse(_))
        ));
        assert!(matches!(
            pld_from_json(r#"{"atoms":[{"p":1e400,"y":0,"mass":1}]}"#),
            Err(CalibError::Parse(_))
        ));
    }

    #[test]
    fn mass_checked() {
        let r = pld_from_json(r#"{"atoms":[{"p":0.5,"y":0,"mass":0.9}]}"#);
        assert!(matches!(r, Err(CalibError::MassNotOne { .. })));
    }

    #[test]
    fn loss_and_post_roundtrip() {
        let l =
            loss_from_json(r#"{"v_mixture":[{"v":0.5,"lambda":1.0}],"affine":{"a":0.0,"b":0.5}}"#)
                .unwrap();
        assert_eq!(l, VMixtureLoss::zero_one());
        assert_eq!(loss_from_json(&loss_to_json(&l)).unwrap(), l);
        let k = PostProcessing::from_point_map(&[(0.0, 0.2), (0.6, 0.9)]).unwrap();
        assert_eq!(
            postprocessing_from_json(&postprocessing_to_json(&k)).unwrap(),
            k
        );
    }
}
