use chrono::{Months, NaiveDate};
use serde::{Deserialize, Serialize};

use super::panel::TradingCalendar;
use super::DataError;

/// Inclusive range of trading days.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Calendar indices `[first, last]` covered by the range, if any.
    pub fn indices(&self, calendar: &TradingCalendar) -> Option<(usize, usize)> {
        let first = calendar.index_at_or_after(self.start)?;
        let last = calendar.index_at_or_before(self.end)?;
        (first <= last).then_some((first, last))
    }

    pub fn len_in(&self, calendar: &TradingCalendar) -> usize {
        self.indices(calendar).map_or(0, |(a, b)| b - a + 1)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end: NaiveDate,
    pub val_end: NaiveDate,
    pub test_end: NaiveDate,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: DateRange,
    pub val: DateRange,
    pub test: DateRange,
}

impl SplitSpec {
    /// Month-based split starting at the calendar's first day: `train_months`
    /// of training, `val_months` of validation, then up to `test_months` of
    /// testing (clipped to the calendar end).
    pub fn from_months(
        calendar: &TradingCalendar,
        train_months: u32,
        val_months: u32,
        test_months: u32,
    ) -> Result<SplitSpec, DataError> {
        let start = calendar
            .first()
            .ok_or_else(|| DataError::InvalidSplit("empty calendar".into()))?;
        let boundary = |months: u32| -> Result<NaiveDate, DataError> {
            let cut = start
                .checked_add_months(Months::new(months))
                .ok_or_else(|| DataError::InvalidSplit("date overflow".into()))?;
            let idx = calendar
                .index_at_or_before(cut.pred_opt().unwrap_or(cut))
                .ok_or_else(|| DataError::InvalidSplit("boundary before calendar".into()))?;
            Ok(calendar.dates()[idx])
        };
        let train_end = boundary(train_months)?;
        let val_end = boundary(train_months + val_months)?;
        let test_end = boundary(train_months + val_months + test_months)?;
        Ok(SplitSpec {
            train_end,
            val_end,
            test_end,
        })
    }
}

/// Partition the calendar into contiguous train, validation, and test ranges.
pub fn split(calendar: &TradingCalendar, spec: &SplitSpec) -> Result<Split, DataError> {
    let locate = |name: &str, d: NaiveDate| {
        calendar
            .index_of(d)
            .ok_or_else(|| DataError::InvalidSplit(format!("{name} {d} is not a calendar date")))
    };
    let t = locate("train_end", spec.train_end)?;
    let v = locate("val_end", spec.val_end)?;
    let e = locate("test_end", spec.test_end)?;
    if !(t < v && v < e) {
        return Err(DataError::InvalidSplit(format!(
            "need train_end < val_end < test_end, got {} / {} / {}",
            spec.train_end, spec.val_end, spec.test_end
        )));
    }
    let d = calendar.dates();
    Ok(Split {
        train: DateRange { start: d[0], end: d[t] },
        val: DateRange {
            start: d[t + 1],
            end: d[v],
        },
        test: DateRange {
            start: d[v + 1],
            end: d[e],
        },
    })
}
