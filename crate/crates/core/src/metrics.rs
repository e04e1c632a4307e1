//! Retrieval quality measures.
//!
//! Ranks are 1-based and pessimistic about ties: the true clip is placed
//! after every candidate with an equal score, so reported figures never
//! benefit from score collisions.

use crate::error::{Result, SrxError};
use crate::matching::SimilarityMatrix;
use std::collections::{BTreeMap, HashMap};

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

/// Rank of the true clip for every caption row.
pub fn ranks(s: &SimilarityMatrix, truth: &HashMap<String, String>) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(s.n_captions());
    for (i, cap_id) in s.caption_ids.iter().enumerate() {
        let clip_id = truth.get(cap_id).ok_or_else(|| {
            SrxError::validation(format!("no ground-truth clip for caption '{cap_id}'"))
        })?;
        let target = s
            .clip_ids
            .iter()
            .position(|c| c == clip_id)
            .ok_or_else(|| {
                SrxError::validation(format!("ground-truth clip '{clip_id}' not in candidate set"))
            })?;
        let own = s.at(i, target);
        let beaten_by = (0..s.n_clips())
            .filter(|j| *j != target && s.at(i, *j) >= own)
            .count();
        out.push(1 + beaten_by);
    }
    Ok(out)
}

/// Recall figures at several cutoffs plus the median rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub r_at: BTreeMap<usize, f64>,
    pub med_r: f64,
    pub n_queries: usize,
    pub n_candidates: usize,
}

pub fn report(ranks: &[usize], n_candidates: usize, ks: &[usize]) -> Result<RetrievalReport> {
    if ranks.is_empty() {
        return Err(SrxError::contract("no ranks to report"));
    }
    if let Some(bad) = ranks.iter().find(|r| **r < 1 || **r > n_candidates) {
        return Err(SrxError::contract(format!(
            "rank {bad} outside [1, {n_candidates}]"
        )));
    }
    let n = ranks.len() as f64;
    let r_at = ks
        .iter()
        .map(|k| (*k, ranks.iter().filter(|r| **r <= *k).count() as f64 / n))
        .collect();
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    let med_r = if sorted.len() % 2 == 1 {
        sorted[mid] as f64
    } else {
        (sorted[mid - 1] + sorted[mid]) as f64 / 2.0
    };
    Ok(RetrievalReport {
        r_at,
        med_r,
        n_queries: ranks.len(),
        n_candidates,
    })
}

/// Both renderings print floats with the shortest round-trip form, so
/// render -> parse -> render reproduces the file byte for byte.
impl RetrievalReport {
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("n_queries {}\n", self.n_queries));
        out.push_str(&format!("n_candidates {}\n", self.n_candidates));
        out.push_str(&format!("med_r {}\n", self.med_r));
        for (k, v) in &self.r_at {
            out.push_str(&format!("r_at_{k} {v}\n"));
        }
        out
    }

    pub fn from_kv(text: &str) -> Result<RetrievalReport> {
        let mut n_queries = None;
        let mut n_candidates = None;
        let mut med_r = None;
        let mut r_at = BTreeMap::new();
        for (offset, line) in lines_with_offsets(text) {
            let (key, value) = line
                .split_once(' ')
                .ok_or_else(|| SrxError::format(offset, "expected 'key value'"))?;
            match key {
                "n_queries" => n_queries = Some(parse_count(value, offset)?),
                "n_candidates" => n_candidates = Some(parse_count(value, offset)?),
                "med_r" => med_r = Some(parse_float(value, offset)?),
                _ => {
                    let k = key.strip_prefix("r_at_").ok_or_else(|| {
                        SrxError::format(offset, format!("unknown key '{key}'"))
                    })?;
                    let k: usize = k.parse().map_err(|_| {
                        SrxError::format(offset, format!("bad cutoff in key '{key}'"))
                    })?;
                    r_at.insert(k, parse_float(value, offset)?);
                }
            }
        }
        Ok(RetrievalReport {
            r_at,
            med_r: med_r.ok_or_else(|| SrxError::format(0, "missing med_r"))?,
            n_queries: n_queries.ok_or_else(|| SrxError::format(0, "missing n_queries"))?,
            n_candidates: n_candidates
                .ok_or_else(|| SrxError::format(0, "missing n_candidates"))?,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("queries: {}\n", self.n_queries));
        out.push_str(&format!("candidates: {}\n", self.n_candidates));
        out.push_str(&format!("MedR: {}\n", self.med_r));
        for (k, v) in &self.r_at {
            out.push_str(&format!("R@{k}: {v}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<RetrievalReport> {
        let mut n_queries = None;
        let mut n_candidates = None;
        let mut med_r = None;
        let mut r_at = BTreeMap::new();
        for (offset, line) in lines_with_offsets(text) {
            let (key, value) = line
                .split_once(": ")
                .ok_or_else(|| SrxError::format(offset, "expected 'label: value'"))?;
            match key {
                "queries" => n_queries = Some(parse_count(value, offset)?),
                "candidates" => n_candidates = Some(parse_count(value, offset)?),
                "MedR" => med_r = Some(parse_float(value, offset)?),
                _ => {
                    let k = key.strip_prefix("R@").ok_or_else(|| {
                        SrxError::format(offset, format!("unknown label '{key}'"))
                    })?;
                    let k: usize = k.parse().map_err(|_| {
                        SrxError::format(offset, format!("bad cutoff in label '{key}'"))
                    })?;
                    r_at.insert(k, parse_float(value, offset)?);
                }
            }
        }
        Ok(RetrievalReport {
            r_at,
            med_r: med_r.ok_or_else(|| SrxError::format(0, "missing MedR"))?,
            n_queries: n_queries.ok_or_else(|| SrxError::format(0, "missing queries"))?,
            n_candidates: n_candidates
                .ok_or_else(|| SrxError::format(0, "missing candidates"))?,
        })
    }
}

fn lines_with_offsets(text: &str) -> impl Iterator<Item = (usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n').filter_map(move |raw| {
        let at = offset;
        offset += raw.len();
        let line = raw.trim_end_matches('\n');
        if line.trim().is_empty() {
            None
        } else {
            Some((at, line))
        }
    })
}

fn parse_count(value: &str, offset: usize) -> Result<usize> {
    value
        .parse()
        .map_err(|_| SrxError::format(offset, format!("bad count '{value}'")))
}

fn parse_float(value: &str, offset: usize) -> Result<f64> {
    value
        .parse()
        .map_err(|_| SrxError::format(offset, format!("bad number '{value}'")))
}
