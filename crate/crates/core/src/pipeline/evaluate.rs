use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::Assignment;
use crate::survival::{
    align_records, concordance_index_with, cox_fit, format_hr, format_p, format_table, kaplan_meier,
    log_rank_by_label, max_pairwise_hr, Concordance, KmCurve, LogRank, MethodRow, PairwiseHr, SurvivalRecord,
};

pub const METHOD_NAME: &str = "AE+GMM+MML";

const REPORT_FORMAT: &str = "phenoclust-report";
const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientCluster {
    pub id: String,
    pub label: usize,
    pub posteriors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCurve {
    pub label: usize,
    pub size: usize,
    pub curve: KmCurve,
}

/// Hazard ratio of the selected pair adjusted for age and sex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedHr {
    pub hr: f64,
    pub lower: f64,
    pub upper: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub format: String,
    pub version: u32,
    pub method: String,
    pub n: usize,
    pub clusters: usize,
    /// Size of each cluster in label order.
    pub sizes: Vec<usize>,
    pub patients: Vec<PatientCluster>,
    pub km: Vec<ClusterCurve>,
    /// Absent with a single cluster.
    pub log_rank: Option<LogRank>,
    pub max_pairwise_hr: Option<PairwiseHr>,
    pub adjusted_hr: Option<AdjustedHr>,
    /// Harrell's C of the per-cluster observed/expected event ratio.
    pub concordance: Option<Concordance>,
}

/// `p = 0.009*` or `p < 0.001*`.
pub(crate) fn p_clause(p: f64) -> String {
    let s = format_p(p);
    match s.strip_prefix('<') {
        Some(rest) => format!("p < {rest}"),
        None => format!("p = {s}"),
    }
}

/// `46, 41 and 21`
pub fn format_sizes(sizes: &[usize]) -> String {
    let parts: Vec<String> = sizes.iter().map(usize::to_string).collect();
    match parts.len() {
        0 => String::new(),
        1 => parts[0].clone(),
        k => format!("{} and {}", parts[..k - 1].join(", "), parts[k - 1]),
    }
}

impl ClusterReport {
    /// Log-rank p value; 1 when there is nothing to compare.
    pub fn log_rank_p(&self) -> f64 {
        self.log_rank.as_ref().map_or(1.0, |l| l.p)
    }

    pub fn method_row(&self) -> Option<MethodRow> {
        let (hr, c) = (self.max_pairwise_hr.as_ref()?, self.concordance.as_ref()?);
        Some(MethodRow {
            method: self.method.clone(),
            concordance: c.c,
            concordance_se: c.se,
            hazard: hr.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: ClusterReport = serde_json::from_str(text).map_err(|e| Error::Schema(format!("report: {e}")))?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(Error::Schema(format!("unsupported report {} v{}", r.format, r.version)));
        }
        Ok(r)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let range = if self.clusters == 1 { "1".to_string() } else { format!("1-{}", self.clusters) };
        out.push_str(&format!(
            "{} clusters selected. There are {} patients in cluster {range}, respectively.\n",
            self.clusters,
            format_sizes(&self.sizes)
        ));
        match &self.log_rank {
            Some(lr) => out.push_str(&format!(
                "Log-rank test: chi2 = {:.3}, df = {}, {}\n",
                lr.chi2,
                lr.df,
                p_clause(lr.p)
            )),
            None => out.push_str("Log-rank test: not applicable (single cluster)\n"),
        }
        if let Some(row) = self.method_row() {
            out.push('\n');
            out.push_str(&format_table(&[row]));
            let hr = self.max_pairwise_hr.as_ref().unwrap();
            out.push_str(&format!(
                "\nMaximum pairwise hazard ratio: cluster {} vs cluster {}\n",
                hr.exposed, hr.reference
            ));
        }
        if let Some(adj) = &self.adjusted_hr {
            out.push_str(&format!(
                "Adjusted for age and sex: {}, {}\n",
                format_hr(adj.hr, adj.lower, adj.upper),
                p_clause(adj.p)
            ));
        }
        out.push_str("\n3-year survival by cluster:\n");
        for c in &self.km {
            out.push_str(&format!(
                "  cluster {} (n = {}): {:.3}\n",
                c.label,
                c.size,
                c.curve.survival_at(crate::survival::HORIZON_MONTHS)
            ));
        }
        out
    }
}

/// Survival evaluation of a hard assignment. Records are matched to
/// `ids` by patient id. `seed` drives the concordance bootstrap.
pub fn evaluate_clusters(
    assignment: &Assignment,
    ids: &[String],
    records: &[SurvivalRecord],
    seed: u64,
    resamples: usize,
) -> Result<ClusterReport> {
    if ids.len() != assignment.labels.len() {
        return Err(Error::Shape(format!("{} ids, {} labels", ids.len(), assignment.labels.len())));
    }
    let records = align_records(records, ids)?;
    let labels = &assignment.labels;
    let sizes = assignment.sizes();
    let patients = ids
        .iter()
        .enumerate()
        .map(|(i, id)| PatientCluster {
            id: id.clone(),
            label: labels[i],
            posteriors: assignment.responsibilities.row(i).to_vec(),
        })
        .collect();
    let mut km = Vec::new();
    for (k, &size) in sizes.iter().enumerate() {
        if size == 0 {
            continue;
        }
        let group: Vec<SurvivalRecord> = records
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == k + 1)
            .map(|(r, _)| r.clone())
            .collect();
        km.push(ClusterCurve {
            label: k + 1,
            size,
            curve: kaplan_meier(&group)?,
        });
    }
    let occupied = km.len();
    let (log_rank, max_hr, adjusted_hr, concordance) = if occupied >= 2 {
        let lr = log_rank_by_label(&records, labels)?;
        let hr = max_pairwise_hr(&records, labels).ok();
        let adjusted = hr.as_ref().and_then(|h| adjusted_pair_hr(&records, labels, h));
        // relative hazard of each cluster: observed over expected events
        let mut ratio = vec![0.0; sizes.len()];
        for (g, c) in km.iter().enumerate() {
            ratio[c.label - 1] = lr.observed[g] / lr.expected[g];
        }
        let risk: Vec<f64> = labels.iter().map(|&l| ratio[l - 1]).collect();
        let c = concordance_index_with(&risk, &records, seed, resamples).ok();
        (Some(lr), hr, adjusted, c)
    } else {
        (None, None, None, None)
    };
    Ok(ClusterReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        method: METHOD_NAME.into(),
        n: ids.len(),
        clusters: occupied,
        sizes: sizes.into_iter().filter(|&s| s > 0).collect(),
        patients,
        km,
        log_rank,
        max_pairwise_hr: max_hr,
        adjusted_hr,
        concordance,
    })
}

fn adjusted_pair_hr(records: &[SurvivalRecord], labels: &[usize], pair: &PairwiseHr) -> Option<AdjustedHr> {
    let mut recs = Vec::new();
    let mut x = Vec::new();
    for (r, &l) in records.iter().zip(labels) {
        if l != pair.exposed && l != pair.reference {
            continue;
        }
        x.push(vec![f64::from(u8::from(l == pair.exposed)), r.age?, f64::from(r.sex?)]);
        recs.push(r.clone());
    }
    let m = cox_fit(&recs, &x).ok()?;
    Some(AdjustedHr {
        hr: m.hazard_ratios[0],
        lower: m.ci_lower[0],
        upper: m.ci_upper[0],
        p: m.p_values[0],
    })
}
