use std::collections::BTreeMap;

use crate::data::AssetId;

use super::PortfolioError;

pub const N_DECILES: u8 = 10;

/// Long-short weighting scheme.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum LegWeighting {
    Equal,
    Value,
}

/// Rank assets by prediction (ties by permno) and place rank `k` of `n` in
/// decile `ceil(10k/n)`.
pub fn decile_assign(predictions: &[(AssetId, f64)]) -> Result<BTreeMap<AssetId, u8>, PortfolioError> {
    let n = predictions.len();
    if n < N_DECILES as usize {
        return Err(PortfolioError::TooFewAssets(n));
    }
    if let Some((a, _)) = predictions.iter().find(|(_, p)| !p.is_finite()) {
        return Err(PortfolioError::InvalidArgument(format!(
            "non-finite prediction for {a}"
        )));
    }
    let mut order: Vec<&(AssetId, f64)> = predictions.iter().collect();
    order.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    let mut out = BTreeMap::new();
    for (i, (asset, _)) in order.into_iter().enumerate() {
        let k = i + 1;
        let decile = (N_DECILES as usize * k).div_ceil(n) as u8;
        if out.insert(*asset, decile).is_some() {
            return Err(PortfolioError::InvalidArgument(format!("duplicate asset {asset}")));
        }
    }
    Ok(out)
}

/// Members of one decile in permno order.
pub fn members(assignments: &BTreeMap<AssetId, u8>, decile: u8) -> Vec<AssetId> {
    assignments
        .iter()
        .filter(|(_, &k)| k == decile)
        .map(|(&a, _)| a)
        .collect()
}

/// Long the top decile and short the bottom one, each leg summing to ±1.
/// Value weighting drops assets without a positive cap from their leg.
pub fn ls_weights(
    assignments: &BTreeMap<AssetId, u8>,
    weighting: LegWeighting,
    cap: impl Fn(AssetId) -> Option<f64>,
) -> Result<BTreeMap<AssetId, f64>, PortfolioError> {
    let mut out = BTreeMap::new();
    for (decile, sign) in [(N_DECILES, 1.0), (1, -1.0)] {
        for (asset, w) in leg(assignments, decile, weighting, &cap)? {
            out.insert(asset, sign * w);
        }
    }
    Ok(out)
}

/// Long-only weights of one decile summing to +1.
pub fn decile_weights(
    assignments: &BTreeMap<AssetId, u8>,
    decile: u8,
    weighting: LegWeighting,
    cap: impl Fn(AssetId) -> Option<f64>,
) -> Result<BTreeMap<AssetId, f64>, PortfolioError> {
    Ok(leg(assignments, decile, weighting, &cap)?.into_iter().collect())
}

fn leg(
    assignments: &BTreeMap<AssetId, u8>,
    decile: u8,
    weighting: LegWeighting,
    cap: &impl Fn(AssetId) -> Option<f64>,
) -> Result<Vec<(AssetId, f64)>, PortfolioError> {
    let assets = members(assignments, decile);
    let sized: Vec<(AssetId, f64)> = match weighting {
        LegWeighting::Equal => assets.iter().map(|&a| (a, 1.0)).collect(),
        LegWeighting::Value => {
            let mut kept = Vec::with_capacity(assets.len());
            for a in assets {
                match cap(a).filter(|c| c.is_finite() && *c > 0.0) {
                    Some(c) => kept.push((a, c)),
                    None => log::warn!("no market cap for {a}; dropped from decile {decile} leg"),
                }
            }
            kept
        }
    };
    let total: f64 = sized.iter().map(|(_, s)| s).sum();
    if sized.is_empty() || total <= 0.0 {
        return Err(PortfolioError::EmptyLeg(decile));
    }
    Ok(sized.into_iter().map(|(a, s)| (a, s / total)).collect())
}

/// Accumulation rule for cumulative decile series.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Compounding {
    Sum,
    Product,
}

/// Running cumulative return of each series.
pub fn decile_cumulative(returns: &[Vec<f64>], mode: Compounding) -> Vec<Vec<f64>> {
    returns
        .iter()
        .map(|series| match mode {
            Compounding::Sum => series
                .iter()
                .scan(0.0, |acc, r| {
                    *acc += r;
                    Some(*acc)
                })
                .collect(),
            Compounding::Product => series
                .iter()
                .scan(1.0, |acc, r| {
                    *acc *= 1.0 + r;
                    Some(*acc - 1.0)
                })
                .collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn preds(values: &[f64]) -> Vec<(AssetId, f64)> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| (AssetId(100 + i as u32), v))
            .collect()
    }

    fn sizes(assign: &BTreeMap<AssetId, u8>) -> Vec<usize> {
        (1..=N_DECILES).map(|k| members(assign, k).len()).collect()
    }

    #[test]
    fn ten_assets_one_per_decile() {
        let p = preds(&[0.5, 0.1, 0.9, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6, 0.0]);
        let assign = decile_assign(&p).unwrap();
        for (a, v) in &p {
            assert_eq!(assign[a], (v * 10.0).round() as u8 + 1);
        }
    }

    #[test]
    fn twenty_assets_two_per_decile() {
        let p = preds(&(0..20).map(|i| i as f64).collect::<Vec<_>>());
        assert_eq!(sizes(&decile_assign(&p).unwrap()), vec![2; 10]);
    }

    #[test]
    fn twenty_three_assets_match_quantile_oracle() {
        let values: Vec<f64> = (0..23).map(|i| ((i * 7) % 23) as f64 * 0.01).collect();
        let p = preds(&values);
        let assign = decile_assign(&p).unwrap();
        let s = sizes(&assign);
        assert!(s.iter().all(|&k| k == 2 || k == 3));
        assert_eq!(s.iter().sum::<usize>(), 23);
        // brute force: count assets strictly below, compare the rank fraction
        for (a, v) in &p {
            let below = p.iter().filter(|(b, w)| w < v || (w == v && b < a)).count();
            let q = (below + 1) as f64 / 23.0;
            let want = (1..=10).find(|&k| q <= k as f64 / 10.0 + 1e-12).unwrap() as u8;
            assert_eq!(assign[a], want);
        }
    }

    #[test]
    fn ties_break_by_permno() {
        let p = preds(&[0.0; 10]);
        let assign = decile_assign(&p).unwrap();
        for (i, (a, _)) in p.iter().enumerate() {
            assert_eq!(assign[a], i as u8 + 1);
        }
    }

    #[test]
    fn fewer_than_ten_assets_is_an_error() {
        assert!(matches!(
            decile_assign(&preds(&[0.0; 9])),
            Err(PortfolioError::TooFewAssets(9))
        ));
    }

    #[test]
    fn equal_weight_legs() {
        let p = preds(&(0..20).map(|i| i as f64).collect::<Vec<_>>());
        let w = ls_weights(&decile_assign(&p).unwrap(), LegWeighting::Equal, |_| None).unwrap();
        assert_eq!(w.len(), 4);
        assert_eq!(w[&AssetId(118)], 0.5);
        assert_eq!(w[&AssetId(119)], 0.5);
        assert_eq!(w[&AssetId(100)], -0.5);
        assert_eq!(w[&AssetId(101)], -0.5);
    }

    #[test]
    fn value_weight_split_by_cap() {
        let p = preds(&(0..20).map(|i| i as f64).collect::<Vec<_>>());
        let cap = |a: AssetId| match a.0 {
            118 => Some(3e9),
            119 => Some(1e9),
            _ => Some(2e9),
        };
        let w = ls_weights(&decile_assign(&p).unwrap(), LegWeighting::Value, cap).unwrap();
        assert!((w[&AssetId(118)] - 0.75).abs() < 1e-15);
        assert!((w[&AssetId(119)] - 0.25).abs() < 1e-15);
        assert!((w[&AssetId(100)] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn equal_caps_make_value_weight_equal_weight() {
        let p = preds(&(0..37).map(|i| (i as f64).sin()).collect::<Vec<_>>());
        let a = decile_assign(&p).unwrap();
        let ew = ls_weights(&a, LegWeighting::Equal, |_| None).unwrap();
        let vw = ls_weights(&a, LegWeighting::Value, |_| Some(5.0)).unwrap();
        assert_eq!(ew.len(), vw.len());
        for (k, v) in &ew {
            assert!((v - vw[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_cap_drops_asset() {
        let p = preds(&(0..20).map(|i| i as f64).collect::<Vec<_>>());
        let cap = |a: AssetId| (a.0 != 119).then_some(1.0);
        let w = ls_weights(&decile_assign(&p).unwrap(), LegWeighting::Value, cap).unwrap();
        assert_eq!(w[&AssetId(118)], 1.0);
        assert!(!w.contains_key(&AssetId(119)));
        let none = ls_weights(&decile_assign(&p).unwrap(), LegWeighting::Value, |_| None);
        assert!(matches!(none, Err(PortfolioError::EmptyLeg(10))));
    }

    #[test]
    fn cumulative_by_hand() {
        let r = vec![vec![0.01, 0.01]];
        let prod = decile_cumulative(&r, Compounding::Product);
        assert!((prod[0][1] - 0.0201).abs() < 1e-15);
        let sum = decile_cumulative(&r, Compounding::Sum);
        assert!((sum[0][1] - 0.02).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn assignment_is_rank_invariant(
            values in prop::collection::vec(-1.0f64..1.0, 10..80),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let p = preds(&values);
            let q: Vec<(AssetId, f64)> = p.iter().map(|&(a, v)| (a, (scale * v + shift).exp())).collect();
            let a = decile_assign(&p).unwrap();
            prop_assert_eq!(&a, &decile_assign(&q).unwrap());
            let s = sizes(&a);
            prop_assert!(s.iter().max().unwrap() - s.iter().min().unwrap() <= 1);
        }

        #[test]
        fn legs_sum_to_plus_minus_one(
            values in prop::collection::vec(-1.0f64..1.0, 10..80),
            caps in prop::collection::vec(1e6f64..1e11, 80),
        ) {
            let p = preds(&values);
            let assign = decile_assign(&p).unwrap();
            let cap = |a: AssetId| Some(caps[(a.0 - 100) as usize]);
            for weighting in [LegWeighting::Equal, LegWeighting::Value] {
                let w = ls_weights(&assign, weighting, cap).unwrap();
                let long: f64 = w.values().filter(|v| **v > 0.0).sum();
                let short: f64 = w.values().filter(|v| **v < 0.0).sum();
                prop_assert!((long - 1.0).abs() < 1e-12);
                prop_assert!((short + 1.0).abs() < 1e-12);
            }
        }
    }
}
