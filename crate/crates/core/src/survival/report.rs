use serde::{Deserialize, Serialize};

use super::PairwiseHr;

/// `3.32 (1.35-8.18)`
pub fn format_hr(hr: f64, lower: f64, upper: f64) -> String {
    format!("{hr:.2} ({lower:.2}-{upper:.2})")
}

/// `0.623±0.052`
pub fn format_concordance(c: f64, se: f64) -> String {
    format!("{c:.3}±{se:.3}")
}

/// Three decimals with a trailing `*` when `p < 0.05`; values below
/// 0.001 print as `<0.001`.
pub fn format_p(p: f64) -> String {
    let star = if p < 0.05 { "*" } else { "" };
    if p < 0.001 {
        format!("<0.001{star}")
    } else {
        format!("{p:.3}{star}")
    }
}

/// One method's row: concordance, maximum pairwise hazard ratio and its
/// Wald p value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    pub concordance: f64,
    pub concordance_se: f64,
    pub hazard: PairwiseHr,
}

impl MethodRow {
    pub fn cells(&self) -> [String; 4] {
        [
            self.method.clone(),
            format_concordance(self.concordance, self.concordance_se),
            format_hr(self.hazard.hr, self.hazard.lower, self.hazard.upper),
            format_p(self.hazard.p),
        ]
    }
}

/// Plain-text table with `Method | Concordance index | Hazard ratio |
/// P value` columns.
pub fn format_table(rows: &[MethodRow]) -> String {
    let header = ["Method", "Concordance index", "Hazard ratio", "P value"].map(String::from);
    let body: Vec<[String; 4]> = rows.iter().map(MethodRow::cells).collect();
    let mut widths = header.clone().map(|h| h.chars().count());
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String; 4]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        format!("{}\n", padded.join(" | ").trim_end())
    };
    let mut out = line(&header);
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for r in &body {
        out.push_str(&line(r));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_formats() {
        assert_eq!(format_hr(3.3216, 1.3549, 8.1849), "3.32 (1.35-8.18)");
        assert_eq!(format_concordance(0.6234, 0.0521), "0.623±0.052");
        assert_eq!(format_p(0.0091), "0.009*");
        assert_eq!(format_p(0.113), "0.113");
        assert_eq!(format_p(0.0004), "<0.001*");
    }

    #[test]
    fn table_has_one_line_per_row() {
        let row = MethodRow {
            method: "AE+GMM+MML".into(),
            concordance: 0.623,
            concordance_se: 0.052,
            hazard: PairwiseHr {
                reference: 1,
                exposed: 3,
                hr: 3.32,
                lower: 1.35,
                upper: 8.18,
                p: 0.009,
            },
        };
        let t = format_table(&[row]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Method"));
        assert_eq!(lines[2], "AE+GMM+MML | 0.623±0.052       | 3.32 (1.35-8.18) | 0.009*");
    }
}
