use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub dice: f64,
    pub voe: f64,
}

/// Scores of one scan under both evaluation regimes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanScores {
    pub scan_id: String,
    /// Restricted to slices with ground-truth foreground.
    pub organ_area: Scores,
    /// Over every slice.
    pub full_volume: Scores,
}

/// Per-scan scores in scan-id order, with arithmetic means across scans.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<ScanScores>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    pub fn new(mut rows: Vec<ScanScores>) -> Self {
        rows.sort_by(|a, b| a.scan_id.cmp(&b.scan_id));
        Self { rows }
    }

    pub fn mean_organ_area(&self) -> Scores {
        Scores {
            dice: mean(self.rows.iter().map(|r| r.organ_area.dice)),
            voe: mean(self.rows.iter().map(|r| r.organ_area.voe)),
        }
    }

    pub fn mean_full_volume(&self) -> Scores {
        Scores {
            dice: mean(self.rows.iter().map(|r| r.full_volume.dice)),
            voe: mean(self.rows.iter().map(|r| r.full_volume.voe)),
        }
    }

    /// Organ-area Dice of every scan, in row order.
    pub fn organ_dice(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.organ_area.dice).collect()
    }

    /// `scan,organ_dice,organ_voe,full_dice,full_voe`, fractions, with a
    /// trailing `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scan,organ_dice,organ_voe,full_dice,full_voe\n");
        let mut line = |id: &str, o: Scores, f: Scores| {
            writeln!(out, "{id},{:.6},{:.6},{:.6},{:.6}", o.dice, o.voe, f.dice, f.voe).expect("string write");
        };
        for r in &self.rows {
            line(&r.scan_id, r.organ_area, r.full_volume);
        }
        line("mean", self.mean_organ_area(), self.mean_full_volume());
        out
    }

    /// Aligned text table in percent with organ-area and full-volume column
    /// groups.
    pub fn to_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.scan_id.len())
            .chain([4])
            .max()
            .unwrap_or(4);
        let mut out = String::new();
        writeln!(out, "{:width$}  {:>14}  {:>14}", "", "Organ Area", "Full Volume").expect("string write");
        writeln!(out, "{:width$}  {:>6}  {:>6}  {:>6}  {:>6}", "scan", "D", "VOE", "D", "VOE").expect("string write");
        let mut line = |id: &str, o: Scores, f: Scores| {
            writeln!(
                out,
                "{id:width$}  {:>6.1}  {:>6.1}  {:>6.1}  {:>6.1}",
                100.0 * o.dice,
                100.0 * o.voe,
                100.0 * f.dice,
                100.0 * f.voe
            )
            .expect("string write");
        };
        for r in &self.rows {
            line(&r.scan_id, r.organ_area, r.full_volume);
        }
        line("mean", self.mean_organ_area(), self.mean_full_volume());
        out
    }
}

/// Lower-triangular p-value table; the diagonal reads `∞`.
pub fn format_significance(names: &[String], matrix: &[Vec<f64>]) -> String {
    let width = names.iter().map(|n| n.chars().count()).max().unwrap_or(0).max(9);
    let mut out = format!("{:width$}", "");
    for n in names {
        write!(out, "  {n:>width$}").expect("string write");
    }
    out.push('\n');
    for (i, row) in matrix.iter().enumerate() {
        write!(out, "{:width$}", names[i]).expect("string write");
        for (j, p) in row.iter().enumerate().take(i + 1) {
            let cell = if i == j { "∞".to_string() } else { format!("{p:.2e}") };
            write!(out, "  {cell:>width$}").expect("string write");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, d: f64) -> ScanScores {
        let s = Scores { dice: d, voe: 2.0 * (1.0 - d) / (2.0 - d) };
        ScanScores {
            scan_id: id.into(),
            organ_area: s,
            full_volume: s,
        }
    }

    #[test]
    fn means_and_order() {
        let r = EvalReport::new(vec![row("b", 0.9), row("a", 1.0)]);
        assert_eq!(r.rows[0].scan_id, "a");
        assert!((r.mean_organ_area().dice - 0.95).abs() < 1e-12);
        assert!(r.to_csv().lines().last().unwrap().starts_with("mean,0.950000"));
    }

    #[test]
    fn table_prints_percentages() {
        let r = EvalReport::new(vec![row("a", 1.0)]);
        let t = r.to_table();
        assert!(t.contains("Organ Area") && t.contains("Full Volume"));
        assert!(t.lines().nth(2).unwrap().contains("100.0"));
        assert!(t.lines().nth(2).unwrap().contains("0.0"));
    }

    #[test]
    fn significance_layout() {
        let names = vec!["full".to_string(), "2d".to_string()];
        let m = vec![vec![f64::INFINITY, 0.01], vec![0.01, f64::INFINITY]];
        let s = format_significance(&names, &m);
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].trim_end().ends_with('∞'));
        assert!(lines[2].contains("1.00e-2") && lines[2].trim_end().ends_with('∞'));
    }
}
