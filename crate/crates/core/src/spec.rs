//! JSON measure documents.
//!
//! ```json
//! {"ambient_dim":1, "ratio":0.3333333333, "sign":1,
//!  "translations":[0.0,0.6666666667], "weights":[0.5,0.5], "label":"cantor13"}
//! ```
//!
//! Planar systems use `"alpha"` and `[x, y]` translation pairs. An optional
//! `"derive"` clause turns the document into a derived measure, for example
//! `{"derive":{"kind":"convolution","u":0.7,"other":"cantor14.json"}}`.
//! A relative `"other"` path resolves against the directory of the document
//! that names it; `"other"` may also be an inline document.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{AmbientDim, HomogeneousIfs, Orientation, Sign, WeightVector};
use crate::scalar::Real;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IfsDocument {
    pub ambient_dim: u8,
    pub ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub translations: Vec<Coord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derive: Option<DeriveClause>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Coord {
    Scalar(f64),
    Pair([f64; 2]),
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DeriveClause {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<OtherRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum OtherRef {
    Path(String),
    Inline(Box<IfsDocument>),
}

/// A base measure `μ(T, a, p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Measure<S> {
    pub ifs: HomogeneousIfs<S>,
    pub weights: WeightVector<S>,
}

impl<S: Real> Measure<S> {
    pub fn new(ifs: HomogeneousIfs<S>, weights: WeightVector<S>) -> Result<Self> {
        if ifs.maps() != weights.len() {
            return Err(Error::spec(format!(
                "{} weights for {} maps",
                weights.len(),
                ifs.maps()
            )));
        }
        Ok(Measure { ifs, weights })
    }

    pub fn uniform(ifs: HomogeneousIfs<S>) -> Self {
        let weights = WeightVector::uniform(ifs.maps());
        Measure { ifs, weights }
    }

    pub fn to_document(&self) -> IfsDocument {
        let ifs = &self.ifs;
        let (sign, alpha) = match ifs.map().orientation() {
            Orientation::Line(s) => (Some(s.as_i32()), None),
            Orientation::Plane { alpha } => (None, Some(alpha.as_f64())),
        };
        let translations = ifs
            .translations()
            .iter()
            .map(|a| match ifs.dim() {
                AmbientDim::One => Coord::Scalar(a.re.as_f64()),
                AmbientDim::Two => Coord::Pair([a.re.as_f64(), a.im.as_f64()]),
            })
            .collect();
        IfsDocument {
            ambient_dim: ifs.dim().as_usize() as u8,
            ratio: ifs.ratio().as_f64(),
            sign,
            alpha,
            translations,
            weights: Some(self.weights.as_slice().iter().map(|w| w.as_f64()).collect()),
            label: Some(ifs.label().to_string()),
            derive: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Skip,
    Keep,
}

/// What to build from the base measure.
#[derive(Clone, Debug, PartialEq)]
pub enum Derivation<S> {
    Projection { beta: S },
    Convolution { other: Box<Measure<S>>, u: S },
    Product { other: Box<Measure<S>> },
    SkipKeep { k: u32, part: Part },
}

/// A parsed document: a base measure and an optional derivation.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSpec<S> {
    pub base: Measure<S>,
    pub derive: Option<Derivation<S>>,
}

fn cast<S: Real>(x: f64, what: &str) -> Result<S> {
    if !x.is_finite() {
        return Err(Error::spec(format!("{what} is not finite")));
    }
    S::from_f64(x).ok_or_else(|| Error::spec(format!("{what} does not fit the scalar type")))
}

fn build_measure<S: Real>(doc: &IfsDocument) -> Result<Measure<S>> {
    let ratio: S = cast(doc.ratio, "ratio")?;
    let label = doc.label.clone().unwrap_or_default();
    let ifs = match doc.ambient_dim {
        1 => {
            if doc.alpha.is_some() {
                return Err(Error::spec("\"alpha\" is only allowed in ambient dimension 2"));
            }
            let sign = Sign::from_i32(doc.sign.unwrap_or(1))
                .ok_or_else(|| Error::spec("\"sign\" must be 1 or -1"))?;
            let ts = doc
                .translations
                .iter()
                .enumerate()
                .map(|(i, c)| match c {
                    Coord::Scalar(x) => cast(*x, &format!("translations[{i}]")),
                    Coord::Pair(_) => Err(Error::spec(format!("translations[{i}] must be a number"))),
                })
                .collect::<Result<Vec<S>>>()?;
            HomogeneousIfs::line(ratio, sign, &ts, label)?
        }
        2 => {
            if doc.sign.is_some() {
                return Err(Error::spec("\"sign\" is only allowed in ambient dimension 1"));
            }
            let alpha: S = cast(doc.alpha.unwrap_or(0.0), "alpha")?;
            let ts = doc
                .translations
                .iter()
                .enumerate()
                .map(|(i, c)| match c {
                    Coord::Pair([x, y]) => Ok([
                        cast(*x, &format!("translations[{i}][0]"))?,
                        cast(*y, &format!("translations[{i}][1]"))?,
                    ]),
                    Coord::Scalar(_) => Err(Error::spec(format!("translations[{i}] must be an [x,y] pair"))),
                })
                .collect::<Result<Vec<[S; 2]>>>()?;
            HomogeneousIfs::plane(ratio, alpha, &ts, label)?
        }
        d => return Err(Error::spec(format!("ambient_dim {d} is not 1 or 2"))),
    };
    let weights = match &doc.weights {
        None => WeightVector::uniform(ifs.maps()),
        Some(w) => WeightVector::new(
            w.iter()
                .enumerate()
                .map(|(i, &x)| cast(x, &format!("weights[{i}]")))
                .collect::<Result<Vec<S>>>()?,
        )?,
    };
    Measure::new(ifs, weights)
}

fn resolve_other<S: Real>(other: &Option<OtherRef>, base_dir: &Path, kind: &str) -> Result<Box<Measure<S>>> {
    let doc = match other {
        None => return Err(Error::spec(format!("derive kind \"{kind}\" needs \"other\""))),
        Some(OtherRef::Inline(doc)) => (**doc).clone(),
        Some(OtherRef::Path(p)) => {
            let path = base_dir.join(p);
            read_document(&path)?
        }
    };
    if doc.derive.is_some() {
        return Err(Error::spec("the \"other\" operand must be a plain measure"));
    }
    Ok(Box::new(build_measure(&doc)?))
}

fn build_derivation<S: Real>(clause: &DeriveClause, base_dir: &Path) -> Result<Derivation<S>> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::spec(format!("derive kind \"{}\" needs \"{name}\"", clause.kind)))
    };
    match clause.kind.as_str() {
        "projection" => Ok(Derivation::Projection {
            beta: cast(need(clause.beta, "beta")?, "beta")?,
        }),
        "convolution" => {
            let u: S = cast(need(clause.u, "u")?, "u")?;
            if u == S::zero() {
                return Err(Error::spec("convolution scale u must be nonzero"));
            }
            Ok(Derivation::Convolution {
                other: resolve_other(&clause.other, base_dir, "convolution")?,
                u,
            })
        }
        "product" => Ok(Derivation::Product {
            other: resolve_other(&clause.other, base_dir, "product")?,
        }),
        "skipkeep" => {
            let k = clause
                .k
                .ok_or_else(|| Error::spec("derive kind \"skipkeep\" needs \"k\""))?;
            let part = match clause.part.as_deref().unwrap_or("skip") {
                "skip" => Part::Skip,
                "keep" => Part::Keep,
                other => return Err(Error::spec(format!("unknown part \"{other}\""))),
            };
            Ok(Derivation::SkipKeep { k, part })
        }
        other => Err(Error::spec(format!("unknown derive kind \"{other}\""))),
    }
}

fn read_document(path: &Path) -> Result<IfsDocument> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        context: path.display().to_string(),
        source,
    })
}

/// Parses a document held in memory; relative `"other"` paths resolve
/// against `base_dir`.
pub fn parse_measure_spec<S: Real>(text: &str, base_dir: &Path) -> Result<MeasureSpec<S>> {
    let doc: IfsDocument = serde_json::from_str(text).map_err(|source| Error::Json {
        context: "<input>".into(),
        source,
    })?;
    from_document(&doc, base_dir)
}

pub fn from_document<S: Real>(doc: &IfsDocument, base_dir: &Path) -> Result<MeasureSpec<S>> {
    let base = build_measure(doc)?;
    let derive = doc
        .derive
        .as_ref()
        .map(|c| build_derivation(c, base_dir))
        .transpose()?;
    Ok(MeasureSpec { base, derive })
}

pub fn load_measure_spec<S: Real>(path: impl AsRef<Path>) -> Result<MeasureSpec<S>> {
    let path = path.as_ref();
    let doc = read_document(path)?;
    let dir: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    from_document(&doc, &dir)
}

/// Loads a document that must not carry a derivation.
pub fn load_measure<S: Real>(path: impl AsRef<Path>) -> Result<Measure<S>> {
    let spec = load_measure_spec(path)?;
    if spec.derive.is_some() {
        return Err(Error::spec("expected a plain measure without \"derive\""));
    }
    Ok(spec.base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_line_document() {
        let text = r#"{"ambient_dim":1, "ratio":0.3333333333, "sign":1,
            "translations":[0.0,0.6666666667], "weights":[0.5,0.5], "label":"cantor13"}"#;
        let spec: MeasureSpec<f64> = parse_measure_spec(text, Path::new(".")).unwrap();
        assert_eq!(spec.base.ifs.maps(), 2);
        assert_eq!(spec.base.ifs.label(), "cantor13");
        assert!(spec.derive.is_none());
    }

    #[test]
    fn parses_plane_document_with_default_weights() {
        let text = r#"{"ambient_dim":2, "ratio":0.5, "alpha":0.25,
            "translations":[[0,0],[1,0],[0,1]]}"#;
        let spec: MeasureSpec<f32> = parse_measure_spec(text, Path::new(".")).unwrap();
        assert_eq!(spec.base.ifs.dim(), AmbientDim::Two);
        assert!(spec.base.weights.is_uniform());
    }

    #[test]
    fn rejects_malformed_documents() {
        let bad = [
            "",
            "{}",
            r#"{"ambient_dim":1,"ratio":1.5,"translations":[0,1]}"#,
            r#"{"ambient_dim":1,"ratio":0.5,"sign":2,"translations":[0,1]}"#,
            r#"{"ambient_dim":1,"ratio":0.5,"translations":[[0,1],[1,0]]}"#,
            r#"{"ambient_dim":3,"ratio":0.5,"translations":[0,1]}"#,
            r#"{"ambient_dim":1,"ratio":0.5,"translations":[0,1],"weights":[0.2,0.2]}"#,
            r#"{"ambient_dim":1,"ratio":0.5,"translations":[0,1],"extra":1}"#,
            r#"{"ambient_dim":1,"ratio":0.5,"translations":[0,1],"derive":{"kind":"twist"}}"#,
        ];
        for text in bad {
            let err = parse_measure_spec::<f64>(text, Path::new(".")).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn inline_convolution_operand() {
        let text = r#"{"ambient_dim":1,"ratio":0.25,"translations":[0,0.75],
            "derive":{"kind":"convolution","u":0.7,
              "other":{"ambient_dim":1,"ratio":0.3333333333333333,"translations":[0,0.6666666666666666]}}}"#;
        let spec: MeasureSpec<f64> = parse_measure_spec(text, Path::new(".")).unwrap();
        match spec.derive {
            Some(Derivation::Convolution { other, u }) => {
                assert_eq!(u, 0.7);
                assert_eq!(other.ifs.maps(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn document_round_trip() {
        let ifs = HomogeneousIfs::line(0.4f64, Sign::Minus, &[0.0, 1.0, 3.0], "neg").unwrap();
        let m = Measure::new(ifs, WeightVector::new(vec![0.2, 0.3, 0.5]).unwrap()).unwrap();
        let text = serde_json::to_string(&m.to_document()).unwrap();
        let back: MeasureSpec<f64> = parse_measure_spec(&text, Path::new(".")).unwrap();
        assert_eq!(back.base, m);
    }
}
