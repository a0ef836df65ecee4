//! Minimal RIFF/WAV PCM reader and writer.
//!
//! Reads 16-bit integer and 32-bit float PCM, mono or multichannel
//! (channels are averaged to mono). Writes 16-bit mono. No other audio
//! formats are supported; convert externally.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

/// Read a PCM WAV file into a mono [`AudioBuffer`].
///
/// Integer samples are scaled to `[-1, 1]` by division by 32768;
/// multichannel data is averaged to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let mut reader = BufReader::new(File::open(path.as_ref())?);
    let mut header = [0u8; 12];
    reader.read_exact(&mut header).map_err(|_| bad("file too short for RIFF header"))?;
    if &header[0..4] != b"RIFF" || &header[8..12] != b"WAVE" {
        return Err(bad("not a RIFF/WAVE file"));
    }

    let mut format: Option<(u16, u16, u32, u16)> = None; // (code, channels, rate, bits)
    let mut data: Option<Vec<u8>> = None;
    let mut chunk_head = [0u8; 8];
    loop {
        match reader.read_exact(&mut chunk_head) {
            Ok(()) => {}
            Err(_) => break,
        }
        let id = [chunk_head[0], chunk_head[1], chunk_head[2], chunk_head[3]];
        let size = u32::from_le_bytes([chunk_head[4], chunk_head[5], chunk_head[6], chunk_head[7]])
            as usize;
        let mut body = vec![0u8; size];
        reader.read_exact(&mut body).map_err(|_| bad("truncated chunk"))?;
        if size % 2 == 1 {
            let mut pad = [0u8; 1];
            let _ = reader.read_exact(&mut pad); // chunk bodies are word-aligned
        }
        match &id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                let code = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes([body[4], body[5], body[6], body[7]]);
                let bits = u16::from_le_bytes([body[14], body[15]]);
                // WAVE_FORMAT_EXTENSIBLE carries the real code in the GUID prefix.
                let code = if code == FORMAT_EXTENSIBLE && body.len() >= 26 {
                    u16::from_le_bytes([body[24], body[25]])
                } else {
                    code
                };
                format = Some((code, channels, rate, bits));
            }
            b"data" => {
                data = Some(body);
            }
            _ => {} // skip LIST, fact, cue, ...
        }
    }

    let (code, channels, rate, bits) =
        format.ok_or_else(|| bad("missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad("missing data chunk"))?;
    if channels == 0 || rate == 0 {
        return Err(bad("fmt chunk declares zero channels or zero sample rate"));
    }
    if data.is_empty() {
        return Err(bad("zero-length data chunk"));
    }

    let interleaved: Vec<f64> = match (code, bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        (FORMAT_IEEE_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        (c, b) => {
            return Err(bad(&format!(
                "unsupported encoding: format code {c}, {b} bits (want 16-bit PCM or 32-bit float)"
            )))
        }
    };
    if interleaved.is_empty() {
        return Err(bad("zero-length data chunk"));
    }

    let ch = channels as usize;
    let frames = interleaved.len() / ch;
    let samples: Vec<f64> = (0..frames)
        .map(|f| interleaved[f * ch..(f + 1) * ch].iter().sum::<f64>() / ch as f64)
        .collect();
    Ok(AudioBuffer::new(samples, rate))
}

/// Write a mono 16-bit PCM WAV file. Samples outside `[-1, 1]` are clamped
/// before encoding; a full round trip through [`read_wav`] is exact within
/// one 16-bit quantization step per sample.
pub fn write_wav(path: impl AsRef<Path>, buf: &AudioBuffer) -> Result<()> {
    if buf.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    let data_len = (buf.samples.len() * 2) as u32;
    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&FORMAT_PCM.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&buf.sample_rate.to_le_bytes())?;
    w.write_all(&(buf.sample_rate * 2).to_le_bytes())?; // byte rate
    w.write_all(&2u16.to_le_bytes())?; // block align
    w.write_all(&16u16.to_le_bytes())?;
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    for &s in &buf.samples {
        let clamped = s.clamp(-1.0, 1.0);
        let q = (clamped * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_all(&q.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn bad(msg: &str) -> Error {
    Error::WavFormat(msg.to_string())
}
