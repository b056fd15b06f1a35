//! WAV ingestion and output.
//!
//! Integer PCM (8/16/24/32-bit) is scaled by `2^(bits-1)` into [-1, 1);
//! IEEE float is taken as is. Multi-channel files yield their first channel.

use std::cell::Cell;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use lofar_core::signal::SampleBuffer;

#[derive(Debug, thiserror::Error)]
#[error("{}: {message} (byte offset {offset})", path.display())]
pub struct WavError {
    pub path: PathBuf,
    pub offset: u64,
    pub message: String,
}

/// Tracks how many bytes the decoder has consumed so errors can say where
/// they happened.
struct Counting<R> {
    inner: R,
    consumed: Rc<Cell<u64>>,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.consumed.set(self.consumed.get() + n as u64);
        Ok(n)
    }
}

fn describe(err: hound::Error) -> String {
    match err {
        hound::Error::IoError(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            "unexpected end of file".into()
        }
        hound::Error::IoError(e) => e.to_string(),
        hound::Error::FormatError(msg) => format!("malformed header: {msg}"),
        hound::Error::Unsupported => "unsupported codec or sample layout".into(),
        other => other.to_string(),
    }
}

/// Reads the first channel of a WAV file.
pub fn read_wav(path: &Path) -> Result<SampleBuffer, WavError> {
    let consumed = Rc::new(Cell::new(0));
    let fail = |message: String| WavError {
        path: path.to_path_buf(),
        offset: consumed.get(),
        message,
    };
    let file = File::open(path).map_err(|e| fail(e.to_string()))?;
    let reader = Counting {
        inner: BufReader::new(file),
        consumed: Rc::clone(&consumed),
    };
    let mut wav = WavReader::new(reader).map_err(|e| fail(describe(e)))?;
    let spec = wav.spec();
    let channels = usize::from(spec.channels.max(1));

    let samples: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => {
            if spec.bits_per_sample != 32 {
                return Err(fail(format!(
                    "unsupported float width {} bits",
                    spec.bits_per_sample
                )));
            }
            let mut out = Vec::with_capacity(wav.len() as usize / channels);
            for (i, s) in wav.samples::<f32>().enumerate() {
                let s = s.map_err(|e| fail(describe(e)))?;
                if i % channels == 0 {
                    out.push(f64::from(s));
                }
            }
            out
        }
        SampleFormat::Int => {
            if !(8..=32).contains(&spec.bits_per_sample) {
                return Err(fail(format!(
                    "unsupported PCM width {} bits",
                    spec.bits_per_sample
                )));
            }
            let scale = 2f64.powi(i32::from(spec.bits_per_sample) - 1);
            let mut out = Vec::with_capacity(wav.len() as usize / channels);
            for (i, s) in wav.samples::<i32>().enumerate() {
                let s = s.map_err(|e| fail(describe(e)))?;
                if i % channels == 0 {
                    out.push(f64::from(s) / scale);
                }
            }
            out
        }
    };
    SampleBuffer::new(samples, f64::from(spec.sample_rate)).map_err(|e| fail(e.to_string()))
}

/// Writes a mono 32-bit float file. The sample rate is rounded to whole Hz.
pub fn write_wav(path: &Path, buf: &SampleBuffer) -> io::Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: buf.sample_rate_hz().round() as u32,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let file = BufWriter::new(File::create(path)?);
    let mut writer = WavWriter::new(file, spec).map_err(io::Error::other)?;
    for &s in buf.samples() {
        writer.write_sample(s as f32).map_err(io::Error::other)?;
    }
    writer.finalize().map_err(io::Error::other)
}

/// Writes interleaved 16-bit PCM, mostly for fixtures.
pub fn write_pcm16(path: &Path, channels: &[Vec<i16>], sample_rate: u32) -> io::Result<()> {
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let file = BufWriter::new(File::create(path)?);
    let mut writer = WavWriter::new(file, spec).map_err(io::Error::other)?;
    let frames = channels.iter().map(Vec::len).min().unwrap_or(0);
    for i in 0..frames {
        for ch in channels {
            writer.write_sample(ch[i]).map_err(io::Error::other)?;
        }
    }
    writer.finalize().map_err(io::Error::other)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_scaling_and_first_channel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        write_pcm16(&path, &[vec![16384, -32768, 0], vec![1, 2, 3]], 8000).unwrap();
        let buf = read_wav(&path).unwrap();
        assert_eq!(buf.samples(), &[0.5, -1.0, 0.0]);
        assert_eq!(buf.sample_rate_hz(), 8000.0);
    }

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let buf = SampleBuffer::new(vec![0.25, -0.75, 0.125], 52734.0).unwrap();
        write_wav(&path, &buf).unwrap();
        assert_eq!(read_wav(&path).unwrap(), buf);
    }

    #[test]
    fn truncated_header_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFF\x24\x00\x00\x00WAVEfmt ").unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(err.offset > 0 && err.offset <= 16, "{err}");
        assert!(err.to_string().contains("byte offset"));

        std::fs::write(&path, b"JUNKJUNKJUNK").unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(err.message.contains("malformed"), "{err}");
    }
}
