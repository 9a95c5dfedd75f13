//! Query parsing, canonical keys and the per-view computations.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use axum::body::Bytes;
use axum::http::StatusCode;
use cnnslicer_core::deconv::{feature_map, project_sample};
use cnnslicer_core::entropy::{DEFAULT_BINS, DEFAULT_K};
use cnnslicer_core::flow::{
    capacity_matrix, channel_entropy_series, circle_pack, slice_entropy, sort_matrix, Metric, SortOrder,
};
use cnnslicer_core::perf::{conditional_entropy_series, confusion, loss_curve, Direction};
use cnnslicer_core::render::{encode_map_png, encode_png};
use cnnslicer_core::store::{Run, SampleSelector, SliceSpec};
use cnnslicer_core::{Error, Result};
use serde::Serialize;

use crate::cache::CachedBody;
use crate::error::ApiError;

pub const JSON: &str = "application/json";
pub const PNG: &str = "image/png";

/// Decoded query string. Repeated keys are rejected.
#[derive(Debug, Default)]
pub struct Params(BTreeMap<String, String>);

impl Params {
    pub fn parse(raw: Option<&str>) -> std::result::Result<Params, ApiError> {
        let mut map = BTreeMap::new();
        for (k, v) in form_urlencoded::parse(raw.unwrap_or("").as_bytes()) {
            if map.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::InvalidArgument(format!("query parameter {k:?} given more than once")).into());
            }
        }
        Ok(Params(map))
    }

    fn allow(&self, keys: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !keys.contains(&k.as_str())) {
            Some(k) => Err(Error::InvalidArgument(format!(
                "unknown query parameter {k:?}; expected one of {}",
                keys.join(", ")
            ))),
            None => Ok(()),
        }
    }

    /// Numeric parameter; `default = None` makes it required.
    fn num<T: FromStr>(&self, key: &str, default: Option<T>) -> Result<T> {
        match (self.0.get(key), default) {
            (Some(v), _) => v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("{key}={v:?} is not a non-negative integer"))),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(Error::InvalidArgument(format!("missing query parameter {key:?}"))),
        }
    }

    fn parsed<T: FromStr<Err = Error>>(&self, key: &str, default: Option<T>) -> Result<T> {
        match (self.0.get(key), default) {
            (Some(v), _) => v.parse(),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(Error::InvalidArgument(format!("missing query parameter {key:?}"))),
        }
    }
}

/// One analysis request against a run, with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub enum View {
    Manifest,
    Loss,
    Confusion { epoch: u32 },
    Conditional { direction: Direction },
    Entropy { slice: SliceSpec, metric: Metric, k: usize, bins: usize },
    Capacity { epoch: u32, li: usize, lj: usize, sort: Option<SortOrder>, x: SampleSelector, bins: usize },
    Series { layer: usize, bins: usize },
    CirclePack { layer: usize, epoch: u32, bins: usize },
    Deconv { epoch: u32, layer: usize, channel: usize, sample: usize },
    FeatureMap { epoch: u32, layer: usize, channel: usize, sample: usize },
}

impl View {
    /// `name` is the path segment after `/api/runs/{id}`; empty for the
    /// manifest itself.
    pub fn parse(name: &str, p: &Params) -> std::result::Result<View, ApiError> {
        let image = |p: &Params| -> Result<(u32, usize, usize, usize)> {
            p.allow(&["epoch", "layer", "channel", "sample"])?;
            Ok((p.num("epoch", None)?, p.num("layer", None)?, p.num("channel", None)?, p.num("sample", None)?))
        };
        let view = match name {
            "" => p.allow(&[]).map(|_| View::Manifest),
            "loss" => p.allow(&[]).map(|_| View::Loss),
            "confusion" => p.allow(&["epoch"]).and_then(|_| Ok(View::Confusion { epoch: p.num("epoch", None)? })),
            "conditional" => p
                .allow(&["direction"])
                .and_then(|_| Ok(View::Conditional { direction: p.parsed("direction", None)? })),
            "entropy" => p.allow(&["slice", "metric", "k", "B"]).and_then(|_| {
                Ok(View::Entropy {
                    slice: p.parsed("slice", None)?,
                    metric: p.parsed("metric", Some(Metric::Inter))?,
                    k: p.num("k", Some(DEFAULT_K))?,
                    bins: p.num("B", Some(DEFAULT_BINS))?,
                })
            }),
            "capacity" => p.allow(&["epoch", "li", "lj", "sort", "x", "B"]).and_then(|_| {
                Ok(View::Capacity {
                    epoch: p.num("epoch", None)?,
                    li: p.num("li", None)?,
                    lj: p.num("lj", None)?,
                    sort: p.0.get("sort").map(|s| s.parse()).transpose()?,
                    x: p.parsed("x", Some(SampleSelector::All))?,
                    bins: p.num("B", Some(DEFAULT_BINS))?,
                })
            }),
            "series" => p.allow(&["layer", "B"]).and_then(|_| {
                Ok(View::Series { layer: p.num("layer", None)?, bins: p.num("B", Some(DEFAULT_BINS))? })
            }),
            "circlepack" => p.allow(&["layer", "epoch", "B"]).and_then(|_| {
                Ok(View::CirclePack {
                    layer: p.num("layer", None)?,
                    epoch: p.num("epoch", None)?,
                    bins: p.num("B", Some(DEFAULT_BINS))?,
                })
            }),
            "deconv" => image(p).map(|(epoch, layer, channel, sample)| View::Deconv { epoch, layer, channel, sample }),
            "featuremap" => {
                image(p).map(|(epoch, layer, channel, sample)| View::FeatureMap { epoch, layer, channel, sample })
            }
            other => return Err(unknown_route(&format!("/api/runs/{{id}}/{other}"))),
        };
        view.map_err(ApiError::from)
    }

    /// Stable text for the request: the view name followed by its sorted,
    /// normalized parameters.
    pub fn canonical(&self) -> String {
        fn join(name: &str, pairs: &[(&str, &dyn Display)]) -> String {
            let mut sorted: Vec<_> = pairs.iter().map(|(k, v)| (*k, v.to_string())).collect();
            sorted.sort();
            let q: Vec<String> = sorted.into_iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("{name}?{}", q.join("&"))
        }
        match self {
            View::Manifest => join("manifest", &[]),
            View::Loss => join("loss", &[]),
            View::Confusion { epoch } => join("confusion", &[("epoch", epoch)]),
            View::Conditional { direction } => join("conditional", &[("direction", direction)]),
            View::Entropy { slice, metric, k, bins } => {
                join("entropy", &[("slice", slice), ("metric", metric), ("k", k), ("B", bins)])
            }
            View::Capacity { epoch, li, lj, sort, x, bins } => {
                let sort = sort.map_or_else(|| "none".to_string(), |s| s.to_string());
                join(
                    "capacity",
                    &[("epoch", epoch), ("li", li), ("lj", lj), ("sort", &sort), ("x", x), ("B", bins)],
                )
            }
            View::Series { layer, bins } => join("series", &[("layer", layer), ("B", bins)]),
            View::CirclePack { layer, epoch, bins } => {
                join("circlepack", &[("layer", layer), ("epoch", epoch), ("B", bins)])
            }
            View::Deconv { epoch, layer, channel, sample } => join(
                "deconv",
                &[("epoch", epoch), ("layer", layer), ("channel", channel), ("sample", sample)],
            ),
            View::FeatureMap { epoch, layer, channel, sample } => join(
                "featuremap",
                &[("epoch", epoch), ("layer", layer), ("channel", channel), ("sample", sample)],
            ),
        }
    }

    pub fn compute(&self, run: &Run) -> Result<CachedBody> {
        match *self {
            View::Manifest => json(run.manifest()),
            View::Loss => json(&loss_curve(run)),
            View::Confusion { epoch } => json(&confusion(run, epoch)?),
            View::Conditional { direction } => json(&conditional_entropy_series(run, direction)?),
            View::Entropy { ref slice, metric, k, bins } => {
                let values = slice_entropy(run, slice, metric, k, bins)?;
                match values.as_slice() {
                    [] => Err(Error::EmptySelection),
                    [one] => json(one),
                    many => json(&many),
                }
            }
            View::Capacity { epoch, li, lj, sort, ref x, bins } => {
                let m = capacity_matrix(run, epoch, li, lj, x, bins)?;
                json(&match sort {
                    Some(s) => sort_matrix(&m, s.axis, s.stat),
                    None => m,
                })
            }
            View::Series { layer, bins } => json(&channel_entropy_series(run, layer, bins)?),
            View::CirclePack { layer, epoch, bins } => json(&circle_pack(run, layer, epoch, bins)?),
            View::Deconv { epoch, layer, channel, sample } => {
                png(encode_png(project_sample(run, epoch, layer, channel, sample)?.view())?)
            }
            View::FeatureMap { epoch, layer, channel, sample } => {
                let map = feature_map(run, epoch, layer, channel, sample)?.mapv(f64::from);
                png(encode_map_png(map.view())?)
            }
        }
    }
}

/// Entry of `GET /api/runs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub dataset: String,
    pub num_classes: usize,
    pub probe_count: usize,
    pub epochs: Vec<u32>,
    pub fingerprint: String,
}

impl RunSummary {
    pub fn of(run: &Run) -> Self {
        let m = run.manifest();
        RunSummary {
            run_id: m.run_id.clone(),
            dataset: m.dataset.clone(),
            num_classes: m.num_classes,
            probe_count: m.probe_count,
            epochs: m.epochs.clone(),
            fingerprint: run.fingerprint().to_string(),
        }
    }
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> Result<CachedBody> {
    let body = serde_json::to_vec(value).map_err(|e| Error::InvalidArgument(format!("cannot encode response: {e}")))?;
    Ok(CachedBody {
        content_type: JSON,
        body: Bytes::from(body),
    })
}

fn png(body: Vec<u8>) -> Result<CachedBody> {
    Ok(CachedBody {
        content_type: PNG,
        body: Bytes::from(body),
    })
}

pub fn unknown_route(path: &str) -> ApiError {
    ApiError::new("UnknownRoute", format!("no endpoint at {path}"), StatusCode::NOT_FOUND)
}
