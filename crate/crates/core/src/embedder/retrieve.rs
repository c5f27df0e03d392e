use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::model::ModelId;
use super::pca::{fit_incremental_rows, fit_pca, from_matrix, to_matrix};
use super::tiers::TierSet;
use super::EmbedderError;

/// Row batch size for the incremental reduction of the beta tier.
pub const IPCA_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Origin {
    Browser,
    Api,
}

impl FromStr for Origin {
    type Err = EmbedderError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "browser" => Ok(Origin::Browser),
            "api" => Ok(Origin::Api),
            _ => Err(EmbedderError::Shape(format!("unknown origin {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TierUsed {
    Alpha,
    BetaReduced,
    Full,
}

/// How a request for `d_r` dimensions is served.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub tier_used: TierUsed,
    pub served_dim: usize,
    pub client_reduce_required: bool,
    /// Server-side reduction target, when the tier is not served as stored.
    pub server_reduce_to: Option<usize>,
}

/// The adaptive retrieval rule over thresholds `alpha < beta <= d`.
pub fn decide(d_r: usize, origin: Origin, alpha: usize, beta: usize, d: usize) -> Result<Decision, EmbedderError> {
    if d_r == 0 || d_r > d {
        return Err(EmbedderError::DimOutOfRange { d_r, d });
    }
    let decision = if d_r <= alpha {
        match origin {
            Origin::Browser => Decision {
                tier_used: TierUsed::Alpha,
                served_dim: alpha,
                client_reduce_required: d_r < alpha,
                server_reduce_to: None,
            },
            Origin::Api => Decision {
                tier_used: TierUsed::Alpha,
                served_dim: d_r,
                client_reduce_required: false,
                server_reduce_to: (d_r < alpha).then_some(d_r),
            },
        }
    } else if d_r <= beta {
        Decision {
            tier_used: TierUsed::BetaReduced,
            served_dim: d_r,
            client_reduce_required: false,
            server_reduce_to: (d_r < beta).then_some(d_r),
        }
    } else {
        Decision {
            tier_used: TierUsed::Full,
            served_dim: d,
            client_reduce_required: false,
            server_reduce_to: None,
        }
    };
    Ok(decision)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub model: ModelId,
    pub year: i32,
    pub requested_dim: usize,
    pub served_dim: usize,
    pub tier_used: TierUsed,
    pub client_reduce_required: bool,
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
    /// Requested cveIDs with no row in this tier set.
    pub missing: Vec<String>,
}

/// Row positions selected by `ids`, in index order, plus the misses.
pub fn select_rows(set: &TierSet, ids: Option<&[String]>) -> (Vec<usize>, Vec<String>) {
    match ids {
        None => ((0..set.rows()).collect(), Vec::new()),
        Some(ids) => {
            let wanted: HashSet<&str> = ids.iter().map(String::as_str).collect();
            let have: HashSet<&str> = set.ids.iter().map(String::as_str).collect();
            let rows = (0..set.rows()).filter(|i| wanted.contains(set.ids[*i].as_str())).collect();
            let mut missing: Vec<String> = ids.iter().filter(|id| !have.contains(id.as_str())).cloned().collect();
            missing.sort();
            missing.dedup();
            (rows, missing)
        }
    }
}

/// Serve `d_r`-dimensional vectors for the selected rows. Server reductions
/// are fitted on the whole tier matrix of the year and then applied to the
/// selected rows.
pub fn retrieve(
    set: &TierSet,
    d_r: usize,
    origin: Origin,
    ids: Option<&[String]>,
) -> Result<EmbeddingResponse, EmbedderError> {
    let d = set.native_dim();
    let decision = decide(d_r, origin, set.alpha.dim, set.beta.dim, d)?;
    let (rows, missing) = select_rows(set, ids);
    let pick = |m: &super::tiers::TierMatrix| -> Vec<Vec<f32>> { rows.iter().map(|i| m.row(*i).to_vec()).collect() };

    let vectors = match (decision.tier_used, decision.server_reduce_to) {
        (TierUsed::Full, _) => pick(&set.full),
        (TierUsed::Alpha, None) => pick(&set.alpha),
        (TierUsed::BetaReduced, None) => pick(&set.beta),
        (TierUsed::Alpha, Some(k)) => {
            let all = to_matrix(&set.alpha.to_rows(), set.alpha.dim)?;
            let model = fit_pca(&all, k)?;
            from_matrix(&model.transform(&to_matrix(&pick(&set.alpha), set.alpha.dim)?)?)
        }
        (TierUsed::BetaReduced, Some(k)) => {
            let model = fit_incremental_rows(&set.beta.to_rows(), set.beta.dim, k, IPCA_BATCH)?;
            model.transform_f32(&pick(&set.beta))?
        }
    };
    Ok(EmbeddingResponse {
        model: set.model,
        year: set.year,
        requested_dim: d_r,
        served_dim: decision.served_dim,
        tier_used: decision.tier_used,
        client_reduce_required: decision.client_reduce_required,
        ids: rows.iter().map(|i| set.ids[*i].clone()).collect(),
        vectors,
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let d = decide(16, Origin::Browser, 32, 128, 768).unwrap();
        assert_eq!((d.tier_used, d.served_dim, d.client_reduce_required), (TierUsed::Alpha, 32, true));
        let d = decide(64, Origin::Api, 32, 128, 768).unwrap();
        assert_eq!((d.tier_used, d.served_dim), (TierUsed::BetaReduced, 64));
        for o in [Origin::Api, Origin::Browser] {
            let d = decide(512, o, 32, 128, 768).unwrap();
            assert_eq!((d.tier_used, d.served_dim), (TierUsed::Full, 768));
        }
        assert!(decide(0, Origin::Api, 32, 128, 768).is_err());
        assert!(decide(769, Origin::Api, 32, 128, 768).is_err());
    }
}
