//! Signal conditioning and spectrogram generation: resampling, band-pass
//! filtering, epoching, wake trimming, z-scoring, STFT and windowing.

pub mod cache;
pub mod epochs;
pub mod filter;
pub mod resample;
pub mod spectrogram;
pub mod window;

use serde::{Deserialize, Serialize};

pub use cache::{read_cache, read_cache_dir, write_cache, PreprocessedRecording};
pub use epochs::{segment_epochs, trim_wake, zscore, RawEpoch, WAKE_MARGIN_EPOCHS};
pub use filter::{bandpass, butter_bandpass, SosFilter};
pub use resample::resample;
pub use spectrogram::{spectrogram, Stft};
pub use window::{make_windows, SequenceWindow, SpectrogramEpoch};

use crate::error::Result;
use crate::ingest::Recording;

pub const TARGET_RATE_HZ: f64 = 100.0;
pub const EPOCH_SAMPLES: usize = 3000;
pub const FREQ_BINS: usize = 76;
pub const TIME_FRAMES: usize = 60;
pub const BAND_LOW_HZ: f64 = 0.5;
pub const BAND_HIGH_HZ: f64 = 30.0;
pub const FILTER_ORDER: usize = 4;
/// Sequence window length `L`.
pub const WINDOW_EPOCHS: usize = 10;
/// Sequence window stride `S`.
pub const WINDOW_STRIDE: usize = 5;

/// Every knob that influences cached output; a mismatch invalidates a cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineParams {
    pub target_rate_hz: f64,
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    pub filter_order: usize,
    pub wake_margin_epochs: usize,
    pub stft_window: usize,
    pub stft_hop: usize,
    pub fft_len: usize,
    pub scaling: String,
    pub format_version: u32,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            target_rate_hz: TARGET_RATE_HZ,
            band_low_hz: BAND_LOW_HZ,
            band_high_hz: BAND_HIGH_HZ,
            filter_order: FILTER_ORDER,
            wake_margin_epochs: WAKE_MARGIN_EPOCHS,
            stft_window: spectrogram::WINDOW_LEN,
            stft_hop: spectrogram::HOP,
            fft_len: spectrogram::FFT_LEN,
            scaling: "log1p-minmax".into(),
            format_version: 1,
        }
    }
}

/// Full chain for one recording: resample, band-pass, segment, trim wake,
/// z-score and STFT.
pub fn preprocess_recording(rec: &Recording, params: &PipelineParams) -> Result<PreprocessedRecording> {
    rec.validate()?;
    let resampled = resample(&rec.samples, rec.sampling_rate_hz, params.target_rate_hz)?;
    let sos = butter_bandpass(params.filter_order, params.band_low_hz, params.band_high_hz, params.target_rate_hz)?;
    let filtered =
        Recording { samples: sos.filtfilt(&resampled), sampling_rate_hz: params.target_rate_hz, ..rec.clone() };
    let epochs = epochs::trim_wake_with_margin(segment_epochs(&filtered)?, params.wake_margin_epochs);
    let stft = Stft::new();
    let epochs = epochs
        .into_iter()
        .map(|e| {
            Ok(SpectrogramEpoch {
                matrix: stft.compute(&zscore(&e.samples))?,
                label: e.label,
                epoch_index: e.index,
                recording_id: rec.recording_id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PreprocessedRecording {
        subject_id: rec.subject_id.clone(),
        recording_id: rec.recording_id.clone(),
        source_sampling_rate_hz: rec.sampling_rate_hz,
        epochs,
    })
}
