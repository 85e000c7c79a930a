use std::path::Path;

use super::DataError;

pub const KTS_MAGIC: &[u8; 4] = b"KTS1";

/// `N` series of `T + 1` states with `n` channels each, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    series: usize,
    steps: usize,
    channels: usize,
    data: Vec<f64>,
    pub channel_names: Vec<String>,
    pub dt: f64,
    pub provenance: String,
}

impl TimeSeriesDataset {
    /// `steps` is `T`, so every series holds `T + 1` states.
    pub fn new(
        series: usize,
        steps: usize,
        channels: usize,
        data: Vec<f64>,
        channel_names: Vec<String>,
        dt: f64,
        provenance: impl Into<String>,
    ) -> Result<Self, DataError> {
        if series == 0 || steps == 0 || channels == 0 {
            return Err(DataError::InvalidDataset(format!(
                "N, T and n must be at least 1 (got N = {series}, T = {steps}, n = {channels})"
            )));
        }
        let expected = series * (steps + 1) * channels;
        if data.len() != expected {
            return Err(DataError::InvalidDataset(format!(
                "N·(T+1)·n = {expected} values expected, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(DataError::InvalidDataset(format!("non-finite value at flat index {pos}")));
        }
        if channel_names.len() != channels {
            return Err(DataError::InvalidDataset(format!(
                "{channels} channels but {} channel names",
                channel_names.len()
            )));
        }
        if let Some(name) = channel_names.iter().find(|c| c.contains('\n')) {
            return Err(DataError::InvalidDataset(format!("channel name {name:?} contains a newline")));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(DataError::InvalidDataset(format!("dt must be positive and finite, got {dt}")));
        }
        Ok(Self { series, steps, channels, data, channel_names, dt, provenance: provenance.into() })
    }

    pub fn series(&self) -> usize {
        self.series
    }

    /// `T`: the number of transitions per series.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// State of series `i` at time `t`.
    pub fn state(&self, i: usize, t: usize) -> &[f64] {
        let start = (i * (self.steps + 1) + t) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// All `(T + 1) × n` values of series `i`.
    pub fn series_data(&self, i: usize) -> &[f64] {
        let len = (self.steps + 1) * self.channels;
        &self.data[i * len..(i + 1) * len]
    }

    /// Series `indices`, keeping the first `steps + 1` states of each.
    pub fn subset(&self, indices: &[usize], steps: usize) -> Result<Self, DataError> {
        if steps == 0 || steps > self.steps {
            return Err(DataError::InvalidDataset(format!("cannot keep {steps} of {} steps", self.steps)));
        }
        let mut data = Vec::with_capacity(indices.len() * (steps + 1) * self.channels);
        for &i in indices {
            if i >= self.series {
                return Err(DataError::InvalidDataset(format!("series {i} out of range 0..{}", self.series)));
            }
            data.extend_from_slice(&self.series_data(i)[..(steps + 1) * self.channels]);
        }
        Self::new(
            indices.len(),
            steps,
            self.channels,
            data,
            self.channel_names.clone(),
            self.dt,
            self.provenance.clone(),
        )
    }

    /// Same series with every state mapped through `f`.
    pub fn map_states(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self, DataError> {
        let data = self.data.chunks(self.channels).flat_map(|s| f(s)).collect();
        Self::new(
            self.series,
            self.steps,
            self.channels,
            data,
            self.channel_names.clone(),
            self.dt,
            self.provenance.clone(),
        )
    }
}

/// KTS1 bytes: magic, little-endian `u32` N, T+1, n, name-block length, the
/// `\n`-joined channel names, `f64` dt, then the data.
pub fn encode_dataset(ds: &TimeSeriesDataset) -> Vec<u8> {
    let names = ds.channel_names.join("\n");
    let mut out = Vec::with_capacity(28 + names.len() + ds.data.len() * 8);
    out.extend_from_slice(KTS_MAGIC);
    for v in [ds.series, ds.steps + 1, ds.channels, names.len()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(names.as_bytes());
    out.extend_from_slice(&ds.dt.to_le_bytes());
    for v in &ds.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8], DataError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len()).ok_or_else(|| DataError::Parse {
            offset: self.pos,
            message: format!("truncated {what}: need {len} bytes, {} remain", self.bytes.len() - self.pos),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<usize, DataError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64, DataError> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

pub fn decode_dataset(bytes: &[u8], provenance: impl Into<String>) -> Result<TimeSeriesDataset, DataError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != KTS_MAGIC {
        return Err(DataError::Parse { offset: 0, message: format!("bad magic {magic:?}, expected \"KTS1\"") });
    }
    let n_series = r.u32("series count")?;
    let len_offset = r.pos;
    let length = r.u32("series length")?;
    let channels = r.u32("channel count")?;
    let names_len = r.u32("name block length")?;
    if n_series == 0 || length < 2 || channels == 0 {
        return Err(DataError::Parse {
            offset: len_offset - 4,
            message: format!("need N ≥ 1, T + 1 ≥ 2, n ≥ 1 (got {n_series}, {length}, {channels})"),
        });
    }
    let names_offset = r.pos;
    let names = std::str::from_utf8(r.take(names_len, "channel names")?)
        .map_err(|e| DataError::Parse { offset: names_offset + e.valid_up_to(), message: "invalid UTF-8".into() })?;
    let channel_names: Vec<String> = names.split('\n').map(String::from).collect();
    if channel_names.len() != channels {
        return Err(DataError::Parse {
            offset: names_offset,
            message: format!("{} channel names for {channels} channels", channel_names.len()),
        });
    }
    let dt_offset = r.pos;
    let dt = r.f64("dt")?;
    let count = n_series
        .checked_mul(length)
        .and_then(|v| v.checked_mul(channels))
        .ok_or_else(|| DataError::Parse { offset: len_offset, message: "dimensions overflow".into() })?;
    let data_offset = r.pos;
    let raw = r.take(count.checked_mul(8).unwrap_or(usize::MAX), "data block")?;
    if r.pos != bytes.len() {
        return Err(DataError::Parse { offset: r.pos, message: format!("{} trailing bytes", bytes.len() - r.pos) });
    }
    let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
        return Err(DataError::Parse { offset: data_offset + 8 * pos, message: "non-finite value".into() });
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(DataError::Parse { offset: dt_offset, message: format!("dt must be positive, got {dt}") });
    }
    TimeSeriesDataset::new(n_series, length - 1, channels, data, channel_names, dt, provenance)
}

pub fn save_dataset(ds: &TimeSeriesDataset, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    std::fs::write(path, encode_dataset(ds)).map_err(|e| DataError::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<TimeSeriesDataset, DataError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_dataset(&bytes, format!("kts1:{}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TimeSeriesDataset {
        let data = (0..2 * 3 * 2).map(|v| v as f64 * 0.25 - 1.0).collect();
        TimeSeriesDataset::new(2, 2, 2, data, vec!["x".into(), "v".into()], 0.1, "test").unwrap()
    }

    #[test]
    fn hand_assembled_fixture() {
        let mut bytes = b"KTS1".to_vec();
        for v in [1u32, 2, 1, 1] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.push(b'x');
        bytes.extend_from_slice(&0.1f64.to_le_bytes());
        bytes.extend_from_slice(&0.5f64.to_le_bytes());
        bytes.extend_from_slice(&0.5f64.to_le_bytes());
        let ds = decode_dataset(&bytes, "fixture").unwrap();
        assert_eq!((ds.series(), ds.steps(), ds.channels()), (1, 1, 1));
        assert_eq!(ds.data(), &[0.5, 0.5]);
        assert_eq!(ds.channel_names, vec!["x".to_string()]);
        assert_eq!(encode_dataset(&ds), bytes);
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ds = sample();
        let back = decode_dataset(&encode_dataset(&ds), "test").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_dataset(&sample());
        for cut in [0, 3, 10, 21, bytes.len() - 1] {
            match decode_dataset(&bytes[..cut], "t") {
                Err(DataError::Parse { offset, .. }) => assert!(offset <= cut),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn bad_magic_and_trailing_bytes() {
        let mut bytes = encode_dataset(&sample());
        bytes.push(0);
        assert!(matches!(decode_dataset(&bytes, "t"), Err(DataError::Parse { .. })));
        bytes.pop();
        bytes[0] = b'X';
        assert!(matches!(decode_dataset(&bytes, "t"), Err(DataError::Parse { offset: 0, .. })));
    }

    #[test]
    fn rejects_invalid_dimensions() {
        assert!(TimeSeriesDataset::new(1, 0, 1, vec![0.0], vec!["x".into()], 0.1, "").is_err());
        assert!(TimeSeriesDataset::new(1, 1, 1, vec![0.0, f64::NAN], vec!["x".into()], 0.1, "").is_err());
        assert!(TimeSeriesDataset::new(1, 1, 1, vec![0.0, 1.0], vec![], 0.1, "").is_err());
    }

    #[test]
    fn subset_keeps_prefix() {
        let ds = sample();
        let sub = ds.subset(&[1], 1).unwrap();
        assert_eq!(sub.data(), &ds.series_data(1)[..4]);
    }
}
