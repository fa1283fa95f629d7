//! Calendar covariates: distance to the surrounding holidays, the type of the
//! nearest holiday, seasonal CWV centering and day-of-year slots.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Holiday category. The discriminant is the on-disk code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HolidayType {
    /// Good Friday and Easter Monday.
    Easter = 1,
    /// May Day, spring and summer bank holidays, one-off holidays.
    Other = 2,
    /// Christmas Day, Boxing Day and New Year's Day.
    Christmas = 3,
}

impl HolidayType {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::Easter),
            2 => Some(Self::Other),
            3 => Some(Self::Christmas),
            _ => None,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based index into per-type parameter arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }
}

/// Observed bank-holiday dates with their types, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct HolidayCalendar {
    entries: Vec<(NaiveDate, HolidayType)>,
}

impl HolidayCalendar {
    pub fn new(entries: Vec<(NaiveDate, HolidayType)>) -> Result<Self> {
        for pair in entries.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(Error::InvalidCalendar(format!(
                    "dates must be strictly increasing: {} followed by {}",
                    pair[0].0, pair[1].0
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(NaiveDate, HolidayType)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_holiday(&self, date: NaiveDate) -> bool {
        self.entries.binary_search_by_key(&date, |e| e.0).is_ok()
    }

    /// First holiday on or after `date`.
    pub fn next_on_or_after(&self, date: NaiveDate) -> Option<(NaiveDate, HolidayType)> {
        let i = self.entries.partition_point(|e| e.0 < date);
        self.entries.get(i).copied()
    }

    /// Last holiday on or before `date`.
    pub fn prev_on_or_before(&self, date: NaiveDate) -> Option<(NaiveDate, HolidayType)> {
        let i = self.entries.partition_point(|e| e.0 <= date);
        i.checked_sub(1).map(|i| self.entries[i])
    }

    /// Calendar covering `first..=last` only, keeping the bracketing holidays.
    pub fn restricted(&self, first: NaiveDate, last: NaiveDate) -> HolidayCalendar {
        let lo = self
            .prev_on_or_before(first)
            .map(|h| h.0)
            .unwrap_or(first);
        let hi = self.next_on_or_after(last).map(|h| h.0).unwrap_or(last);
        HolidayCalendar {
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|e| e.0 >= lo && e.0 <= hi)
                .collect(),
        }
    }
}

/// Slot of `date` in a fixed 366-day year: Feb 29 is slot 60 and every later
/// date uses its leap-year ordinal, so Dec 31 is always 366.
pub fn day_of_year_slot(date: NaiveDate) -> u16 {
    let ord = date.ordinal() as u16;
    if date.month() <= 2 || date.leap_year() {
        ord
    } else {
        ord + 1
    }
}

/// Distance-to-holiday information for one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HolidayDistance {
    /// Days to the next holiday (0 on a holiday).
    pub n: u32,
    /// Days since the previous holiday (0 on a holiday).
    pub p: u32,
    /// Type of the nearest holiday; ties go to the later one.
    pub r: HolidayType,
}

impl HolidayDistance {
    pub fn is_holiday(&self) -> bool {
        self.n == 0 && self.p == 0
    }

    /// `min(n, p)`, the distance-to-holiday bucket used by coverage summaries.
    pub fn gap(&self) -> u32 {
        self.n.min(self.p)
    }
}

/// Computes `(n, p, r)` for `date`, failing if the calendar has no holiday on
/// one side of it.
pub fn holiday_distance(calendar: &HolidayCalendar, date: NaiveDate) -> Result<HolidayDistance> {
    let next = calendar.next_on_or_after(date).ok_or_else(|| {
        Error::CalendarMargin(format!("no holiday on or after {date}"))
    })?;
    let prev = calendar.prev_on_or_before(date).ok_or_else(|| {
        Error::CalendarMargin(format!("no holiday on or before {date}"))
    })?;
    let n = (next.0 - date).num_days() as u32;
    let p = (date - prev.0).num_days() as u32;
    let r = if p < n { prev.1 } else { next.1 };
    Ok(HolidayDistance { n, p, r })
}

/// Covariates for one observed day.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayCovariates {
    pub date: NaiveDate,
    pub n: u32,
    pub p: u32,
    pub r: HolidayType,
    /// Raw CWV per region.
    pub w: [f64; 2],
    /// CWV minus its smoothed day-of-year mean.
    pub w_centered: [f64; 2],
    /// Day-of-year slot in 1..=366.
    pub doy: u16,
    /// Days since the epoch; the epoch itself is day 1.
    pub t_index: i64,
}

impl DayCovariates {
    pub fn is_holiday(&self) -> bool {
        self.n == 0 && self.p == 0
    }

    pub fn gap(&self) -> u32 {
        self.n.min(self.p)
    }

    pub fn distance(&self) -> HolidayDistance {
        HolidayDistance {
            n: self.n,
            p: self.p,
            r: self.r,
        }
    }
}

/// Covariates for days `1..=T` plus the distance information for day 0,
/// which drives the initial state distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSeries {
    pub epoch: NaiveDate,
    pub day0: HolidayDistance,
    pub days: Vec<DayCovariates>,
}

impl CovariateSeries {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.days.iter().map(|d| d.date).collect()
    }
}

/// Smoothed day-of-year CWV mean, one row per slot 1..=366.
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalCwvBaseline {
    m: Vec<[f64; 2]>,
}

impl SeasonalCwvBaseline {
    pub fn from_rows(m: Vec<[f64; 2]>) -> Result<Self> {
        if m.len() != 366 {
            return Err(Error::InvalidInput(format!(
                "baseline needs 366 rows, got {}",
                m.len()
            )));
        }
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("baseline has non-finite entries".into()));
        }
        Ok(Self { m })
    }

    pub fn constant(value: [f64; 2]) -> Self {
        Self { m: vec![value; 366] }
    }

    /// Baseline for day-of-year slot `doy` (1-based).
    pub fn at(&self, doy: u16) -> [f64; 2] {
        self.m[doy as usize - 1]
    }

    pub fn rows(&self) -> &[[f64; 2]] {
        &self.m
    }
}

/// Per-slot mean of the history followed by a circular moving average of
/// half-width `window_halfwidth` over the 366 slots.
///
/// Slot 60 (Feb 29) uses the leap-day observations when there are any and
/// otherwise the mean of slots 59 and 61.
pub fn smooth_cwv_baseline(
    dates: &[NaiveDate],
    cwv: &[[f64; 2]],
    window_halfwidth: usize,
) -> Result<SeasonalCwvBaseline> {
    if dates.is_empty() {
        return Err(Error::InvalidInput("empty CWV history".into()));
    }
    if dates.len() != cwv.len() {
        return Err(Error::InvalidInput(format!(
            "{} dates but {} CWV rows",
            dates.len(),
            cwv.len()
        )));
    }
    let mut sum = vec![[0.0f64; 2]; 366];
    let mut count = vec![0usize; 366];
    for (date, w) in dates.iter().zip(cwv) {
        if !w[0].is_finite() || !w[1].is_finite() {
            return Err(Error::InvalidInput(format!("missing CWV on {date}")));
        }
        let slot = day_of_year_slot(*date) as usize - 1;
        sum[slot][0] += w[0];
        sum[slot][1] += w[1];
        count[slot] += 1;
    }
    let mut raw = vec![[0.0f64; 2]; 366];
    for slot in 0..366 {
        if slot == 59 {
            continue;
        }
        if count[slot] == 0 {
            return Err(Error::InvalidInput(format!(
                "CWV history does not cover day-of-year slot {}; at least one full year is required",
                slot + 1
            )));
        }
        let c = count[slot] as f64;
        raw[slot] = [sum[slot][0] / c, sum[slot][1] / c];
    }
    raw[59] = if count[59] > 0 {
        let c = count[59] as f64;
        [sum[59][0] / c, sum[59][1] / c]
    } else {
        [0.5 * (raw[58][0] + raw[60][0]), 0.5 * (raw[58][1] + raw[60][1])]
    };

    let width = (2 * window_halfwidth + 1) as f64;
    let h = window_halfwidth as isize;
    let m = (0..366isize)
        .map(|d| {
            let mut acc = [0.0f64; 2];
            for k in -h..=h {
                let idx = (d + k).rem_euclid(366) as usize;
                acc[0] += raw[idx][0];
                acc[1] += raw[idx][1];
            }
            [acc[0] / width, acc[1] / width]
        })
        .collect();
    Ok(SeasonalCwvBaseline { m })
}

fn check_contiguous(dates: &[NaiveDate]) -> Result<()> {
    for pair in dates.windows(2) {
        if (pair[1] - pair[0]).num_days() != 1 {
            return Err(Error::NonContiguousDates(format!(
                "{} is followed by {}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Builds the covariate series for a contiguous run of days, with the first
/// data day as the Fourier epoch.
pub fn build_covariates(
    dates: &[NaiveDate],
    calendar: &HolidayCalendar,
    cwv: &[[f64; 2]],
    baseline: &SeasonalCwvBaseline,
) -> Result<CovariateSeries> {
    let epoch = *dates
        .first()
        .ok_or_else(|| Error::InvalidInput("no data days".into()))?;
    build_covariates_with_epoch(dates, calendar, cwv, baseline, epoch)
}

/// As [`build_covariates`], with an explicit epoch (the day whose `t_index`
/// is 1). Forecast horizons reuse the epoch of the fitted series.
pub fn build_covariates_with_epoch(
    dates: &[NaiveDate],
    calendar: &HolidayCalendar,
    cwv: &[[f64; 2]],
    baseline: &SeasonalCwvBaseline,
    epoch: NaiveDate,
) -> Result<CovariateSeries> {
    let first = *dates
        .first()
        .ok_or_else(|| Error::InvalidInput("no data days".into()))?;
    if dates.len() != cwv.len() {
        return Err(Error::InvalidInput(format!(
            "{} dates but {} CWV rows",
            dates.len(),
            cwv.len()
        )));
    }
    check_contiguous(dates)?;
    let last = *dates.last().expect("non-empty");
    let day0_date = first.pred_opt().expect("date in range");
    if calendar.prev_on_or_before(day0_date).is_none() {
        return Err(Error::CalendarMargin(format!(
            "calendar needs a holiday on or before {day0_date} (the day before the first data day)"
        )));
    }
    if calendar.next_on_or_after(last).is_none() {
        return Err(Error::CalendarMargin(format!(
            "calendar needs a holiday on or after {last} (the last data day)"
        )));
    }
    let day0 = holiday_distance(calendar, day0_date)?;
    let mut days = Vec::with_capacity(dates.len());
    for (date, w) in dates.iter().zip(cwv) {
        if !w[0].is_finite() || !w[1].is_finite() {
            return Err(Error::InvalidInput(format!("missing CWV on {date}")));
        }
        let dist = holiday_distance(calendar, *date)?;
        let doy = day_of_year_slot(*date);
        let m = baseline.at(doy);
        days.push(DayCovariates {
            date: *date,
            n: dist.n,
            p: dist.p,
            r: dist.r,
            w: *w,
            w_centered: [w[0] - m[0], w[1] - m[1]],
            doy,
            t_index: (*date - epoch).num_days() + 1,
        });
    }
    Ok(CovariateSeries { epoch, day0, days })
}
