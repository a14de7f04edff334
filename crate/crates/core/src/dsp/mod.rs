//! Log-mel filter bank features and stride matching between frame streams.

mod align;
mod fbank;

pub use align::align_streams;
pub use fbank::{
    hz_to_mel, log_mel_spectrogram, mel_center_frequencies, mel_filterbank, mel_to_hz, read_wav, write_wav,
    FbankConfig,
};
