//! One-dimensional signal stages: moving average, first difference,
//! short-time Fourier transform in decibels, and band thresholding.

use crate::error::{Error, Result};

/// Centred moving average; windows are truncated at both edges so the output
/// has the input's length.
pub fn moving_average(signal: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "moving average window must be odd and >= 1, got {window}"
        )));
    }
    let half = window / 2;
    let n = signal.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            signal[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect())
}

/// First difference, `out[i] = x[i + 1] - x[i]`.
pub fn derivative(signal: &[f64]) -> Result<Vec<f64>> {
    if signal.len() < 2 {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            needed: 2,
        });
    }
    Ok(signal.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Amplitude in decibels, `20 log10(m)`; zero maps to negative infinity.
pub fn to_db(magnitude: f64) -> f64 {
    if magnitude == 0.0 {
        f64::NEG_INFINITY
    } else {
        20.0 * magnitude.log10()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumColumn {
    /// Signal index the window is centred on.
    pub center: usize,
    /// Unique bands `0..=N/2` in dB.
    pub bands_db: Vec<f64>,
}

impl SpectrumColumn {
    pub fn dc_db(&self) -> f64 {
        self.bands_db[0]
    }

    /// First non-DC bin, the band thresholded for movement.
    pub fn high_db(&self) -> f64 {
        self.bands_db[1]
    }
}

/// Rectangular-window STFT with hop 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub window: usize,
    pub signal_len: usize,
    pub columns: Vec<SpectrumColumn>,
}

/// Magnitudes of DFT bins `0..=N/2` of one real window.
///
/// Non-DC bins are evaluated on `x[n] - x[0]`, which leaves them unchanged
/// (the twiddles of a non-DC bin sum to zero) and makes a constant window
/// give exactly zero.
fn window_magnitudes(x: &[f64], twiddles: &[Vec<(f64, f64)>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(twiddles.len() + 1);
    out.push(x.iter().sum::<f64>().abs());
    for tw in twiddles {
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &(c, s)) in tw.iter().enumerate().skip(1) {
            let d = x[n] - x[0];
            re += d * c;
            im -= d * s;
        }
        out.push(re.hypot(im));
    }
    out
}

pub fn stft_db(signal: &[f64], window: usize) -> Result<Spectrogram> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "stft window must be odd and >= 3, got {window}"
        )));
    }
    if signal.len() < window {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            needed: window,
        });
    }
    let twiddles: Vec<Vec<(f64, f64)>> = (1..=window / 2)
        .map(|k| {
            (0..window)
                .map(|n| {
                    let phase = 2.0 * std::f64::consts::PI * (k * n) as f64 / window as f64;
                    (phase.cos(), phase.sin())
                })
                .collect()
        })
        .collect();
    let columns = signal
        .windows(window)
        .enumerate()
        .map(|(p, w)| SpectrumColumn {
            center: p + window / 2,
            bands_db: window_magnitudes(w, &twiddles)
                .into_iter()
                .map(to_db)
                .collect(),
        })
        .collect();
    Ok(Spectrogram {
        window,
        signal_len: signal.len(),
        columns,
    })
}

/// Per-sample movement flags: a column flags its centre sample when the high
/// band strictly exceeds `db_threshold`; samples without a full window take
/// the nearest column's flag.
pub fn threshold_movement(spec: &Spectrogram, db_threshold: f64) -> Vec<bool> {
    let mut flags = vec![false; spec.signal_len];
    let (Some(first), Some(last)) = (spec.columns.first(), spec.columns.last()) else {
        return flags;
    };
    for col in &spec.columns {
        flags[col.center] = col.high_db() > db_threshold;
    }
    let head = flags[first.center];
    let tail = flags[last.center];
    flags[..first.center].iter_mut().for_each(|f| *f = head);
    flags[last.center + 1..].iter_mut().for_each(|f| *f = tail);
    flags
}
