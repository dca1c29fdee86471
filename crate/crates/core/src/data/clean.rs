use super::panel::{CellFill, FactorPanel};

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Fill missing factor cells.
///
/// Pass one carries each (asset, factor) series forward from its last
/// observed value. Pass two sets whatever is still missing to the date's
/// cross-sectional median over the assets that have a value, or to `0.0`
/// when the whole cross-section is empty.
pub fn clean_factors(panel: &FactorPanel) -> FactorPanel {
    let mut out = panel.clone();
    let (nd, na, nf) = out.values.dim();

    for ai in 0..na {
        for fi in 0..nf {
            let mut last: Option<f64> = None;
            for di in 0..nd {
                match out.fill[[di, ai, fi]] {
                    CellFill::Observed => last = Some(out.values[[di, ai, fi]]),
                    CellFill::Missing => {
                        if let Some(v) = last {
                            out.values[[di, ai, fi]] = v;
                            out.fill[[di, ai, fi]] = CellFill::ForwardFilled;
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    let mut buf = Vec::with_capacity(na);
    for di in 0..nd {
        for fi in 0..nf {
            if (0..na).all(|ai| out.fill[[di, ai, fi]].has_value()) {
                continue;
            }
            buf.clear();
            buf.extend(
                (0..na)
                    .filter(|&ai| out.fill[[di, ai, fi]].has_value())
                    .map(|ai| out.values[[di, ai, fi]]),
            );
            let (fill_value, flag) = match median(&mut buf) {
                Some(m) => (m, CellFill::MedianImputed),
                None => (0.0, CellFill::Defaulted),
            };
            for ai in 0..na {
                if !out.fill[[di, ai, fi]].has_value() {
                    out.values[[di, ai, fi]] = fill_value;
                    out.fill[[di, ai, fi]] = flag;
                }
            }
        }
    }
    out
}

/// Replace each cross-section (date, factor) by its ranks scaled to [-1, 1].
///
/// Ties share their average rank. Cells without a value are left alone.
pub fn rank_standardize(panel: &FactorPanel) -> FactorPanel {
    let mut out = panel.clone();
    let (nd, na, nf) = out.values.dim();
    let mut idx: Vec<usize> = Vec::with_capacity(na);
    for di in 0..nd {
        for fi in 0..nf {
            idx.clear();
            idx.extend((0..na).filter(|&ai| panel.fill[[di, ai, fi]].has_value()));
            let n = idx.len();
            if n == 0 {
                continue;
            }
            if n == 1 {
                out.values[[di, idx[0], fi]] = 0.0;
                continue;
            }
            idx.sort_by(|&a, &b| panel.values[[di, a, fi]].total_cmp(&panel.values[[di, b, fi]]));
            let half = (n - 1) as f64 / 2.0;
            let mut start = 0;
            while start < n {
                let v = panel.values[[di, idx[start], fi]];
                let mut end = start + 1;
                while end < n && panel.values[[di, idx[end], fi]] == v {
                    end += 1;
                }
                let avg_rank = (start + end - 1) as f64 / 2.0;
                for &ai in &idx[start..end] {
                    out.values[[di, ai, fi]] = (avg_rank - half) / half;
                }
                start = end;
            }
        }
    }
    out
}
