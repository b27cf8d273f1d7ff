use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, NaiveDate};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::ProviderError;
use crate::series::parse_date;

/// Raw closes for one instrument from an independent source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossCheckSeries {
    pub ticker: String,
    pub closes: BTreeMap<NaiveDate, Decimal>,
}

pub trait MarketData: Send + Sync {
    fn identity(&self) -> String;
    /// Closes for the requested dates that exist at the source. Dates the
    /// source lacks are left out rather than reported as errors.
    fn fetch_closes(&self, ticker: &str, dates: &[NaiveDate]) -> Result<CrossCheckSeries, ProviderError>;
}

fn select(ticker: &str, available: &BTreeMap<NaiveDate, Decimal>, dates: &[NaiveDate]) -> Result<CrossCheckSeries, ProviderError> {
    let wanted: BTreeSet<NaiveDate> = dates.iter().copied().collect();
    let closes: BTreeMap<NaiveDate, Decimal> = wanted
        .iter()
        .filter_map(|d| available.get(d).map(|v| (*d, *v)))
        .collect();
    if closes.is_empty() {
        return Err(ProviderError::NoData {
            ticker: ticker.to_string(),
        });
    }
    Ok(CrossCheckSeries {
        ticker: ticker.to_string(),
        closes,
    })
}

/// Closes loaded from a `ticker,date,close` CSV.
#[derive(Debug, Clone)]
pub struct FixtureMarketData {
    label: String,
    by_ticker: BTreeMap<String, BTreeMap<NaiveDate, Decimal>>,
}

#[derive(Deserialize)]
struct CloseRow {
    ticker: String,
    date: String,
    close: String,
}

impl FixtureMarketData {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| ProviderError::fixture(path, e))?;
        let mut by_ticker: BTreeMap<String, BTreeMap<NaiveDate, Decimal>> = BTreeMap::new();
        for (i, row) in reader.deserialize::<CloseRow>().enumerate() {
            let row = row.map_err(|e| ProviderError::fixture(path, e))?;
            let line = i + 2;
            let date = parse_date(&row.date)
                .ok_or_else(|| ProviderError::fixture(path, format!("bad date at row {line}")))?;
            let close = Decimal::from_str_exact(row.close.trim())
                .map_err(|_| ProviderError::fixture(path, format!("bad close at row {line}")))?;
            by_ticker.entry(row.ticker).or_default().insert(date, close);
        }
        let label = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("closes")
            .to_string();
        Ok(Self { label, by_ticker })
    }
}

impl MarketData for FixtureMarketData {
    fn identity(&self) -> String {
        format!("fixture:{}", self.label)
    }

    fn fetch_closes(&self, ticker: &str, dates: &[NaiveDate]) -> Result<CrossCheckSeries, ProviderError> {
        if dates.is_empty() {
            return Err(ProviderError::NoDates);
        }
        let available = self
            .by_ticker
            .get(ticker)
            .ok_or_else(|| ProviderError::UnknownTicker(ticker.to_string()))?;
        select(ticker, available, dates)
    }
}

#[derive(Deserialize)]
struct ChartEnvelope {
    chart: Chart,
}

#[derive(Deserialize)]
struct Chart {
    result: Option<Vec<ChartResult>>,
    error: Option<ChartError>,
}

#[derive(Deserialize)]
struct ChartError {
    code: String,
    description: String,
}

#[derive(Deserialize)]
struct ChartResult {
    meta: ChartMeta,
    #[serde(default)]
    timestamp: Vec<i64>,
    indicators: Indicators,
}

#[derive(Deserialize)]
struct ChartMeta {
    #[serde(default)]
    gmtoffset: i64,
}

#[derive(Deserialize)]
struct Indicators {
    quote: Vec<Quote>,
}

#[derive(Deserialize)]
struct Quote {
    close: Vec<Option<f64>>,
}

/// Yahoo-style chart endpoint:
/// `GET {base}/v8/finance/chart/{ticker}?period1=..&period2=..&interval=1d`.
pub struct YahooChartClient {
    agent: ureq::Agent,
    base_url: String,
}

impl YahooChartClient {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }
}

fn to_decimal_close(v: f64) -> Option<Decimal> {
    // quotes arrive as binary floats; two decimals is the published precision
    Decimal::try_from(v).ok().map(|d| d.round_dp(2))
}

impl MarketData for YahooChartClient {
    fn identity(&self) -> String {
        format!("http:{}", self.base_url)
    }

    fn fetch_closes(&self, ticker: &str, dates: &[NaiveDate]) -> Result<CrossCheckSeries, ProviderError> {
        let first = dates.iter().min().ok_or(ProviderError::NoDates)?;
        let last = dates.iter().max().expect("non-empty");
        let start = first.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() - 86_400;
        let end = last.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp() + 2 * 86_400;
        let url = format!("{}/v8/finance/chart/{}", self.base_url, urlencode(ticker));
        let response = self
            .agent
            .get(&url)
            .query("period1", &start.to_string())
            .query("period2", &end.to_string())
            .query("interval", "1d")
            .call();
        let envelope: ChartEnvelope = match response {
            Ok(r) => r.into_json().map_err(|e| ProviderError::BadResponse(e.to_string()))?,
            Err(ureq::Error::Status(404, _)) => return Err(ProviderError::UnknownTicker(ticker.to_string())),
            Err(ureq::Error::Status(status, r)) => {
                return Err(ProviderError::Status {
                    status,
                    message: r.into_string().unwrap_or_default(),
                })
            }
            Err(ureq::Error::Transport(t)) => return Err(ProviderError::Transport(t.to_string())),
        };
        if let Some(err) = envelope.chart.error {
            return Err(if err.code.eq_ignore_ascii_case("Not Found") {
                ProviderError::UnknownTicker(ticker.to_string())
            } else {
                ProviderError::BadResponse(format!("{}: {}", err.code, err.description))
            });
        }
        let result = envelope
            .chart
            .result
            .and_then(|r| r.into_iter().next())
            .ok_or_else(|| ProviderError::BadResponse("empty chart result".into()))?;
        let closes = result
            .indicators
            .quote
            .first()
            .ok_or_else(|| ProviderError::BadResponse("no quote block".into()))?;
        let mut available = BTreeMap::new();
        for (ts, close) in result.timestamp.iter().zip(&closes.close) {
            let Some(close) = close.and_then(to_decimal_close) else { continue };
            let local = DateTime::from_timestamp(ts + result.meta.gmtoffset, 0)
                .ok_or_else(|| ProviderError::BadResponse(format!("bad timestamp {ts}")))?;
            available.insert(local.date_naive(), close);
        }
        select(ticker, &available, dates)
    }
}

fn urlencode(s: &str) -> String {
    s.bytes()
        .map(|b| match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => (b as char).to_string(),
            _ => format!("%{b:02X}"),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> FixtureMarketData {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/providers/closes.csv");
        FixtureMarketData::load(&path).unwrap()
    }

    fn d(s: &str) -> NaiveDate {
        parse_date(s).unwrap()
    }

    #[test]
    fn injected_null_dates_have_closes() {
        let got = fixture()
            .fetch_closes("^GSPC", &[d("1987-10-20"), d("2008-10-14"), d("2020-03-12")])
            .unwrap();
        assert_eq!(got.closes[&d("1987-10-20")].to_string(), "236.83");
        assert_eq!(got.closes[&d("2008-10-14")].to_string(), "998.01");
        assert_eq!(got.closes[&d("2020-03-12")].to_string(), "2480.64");
        // 2711.02 is the following session's close
        let next = fixture().fetch_closes("^GSPC", &[d("2020-03-13")]).unwrap();
        assert_eq!(next.closes[&d("2020-03-13")].to_string(), "2711.02");
    }

    #[test]
    fn weekend_dates_omitted() {
        let got = fixture()
            .fetch_closes("^GSPC", &[d("1987-10-17"), d("1987-10-19")])
            .unwrap();
        assert_eq!(got.closes.len(), 1);
        assert!(got.closes.contains_key(&d("1987-10-19")));
    }

    #[test]
    fn unknown_ticker() {
        let err = fixture().fetch_closes("NOPE", &[d("1987-10-19")]).unwrap_err();
        assert!(err.to_string().contains("ticker unknown"));
    }

    #[test]
    fn empty_request() {
        assert!(matches!(fixture().fetch_closes("^GSPC", &[]), Err(ProviderError::NoDates)));
    }

    #[test]
    fn encode_caret() {
        assert_eq!(urlencode("^GSPC"), "%5EGSPC");
    }
}
