//! WAV, formant CSV and dataset manifest ingestion.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    default_silence_threshold, encode_formant_spikes, extract_formants, filterbank_energies,
    FilterbankConfig, FormantFrame, FrontendError, LabeledSample, PcmAudio, SplitRole, DIGIT_NAMES,
};

/// Reads a 16-bit PCM WAV file. Stereo (or wider) files keep only their
/// first channel.
pub fn read_wav(path: &Path) -> Result<PcmAudio, FrontendError> {
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(FrontendError::Parse {
            path: path.display().to_string(),
            msg: format!(
                "expected 16-bit integer PCM, got {} bits {:?}",
                spec.bits_per_sample, spec.sample_format
            ),
        });
    }
    let channels = spec.channels.max(1) as usize;
    if channels > 1 {
        log::warn!("{}: {} channels, using the first", path.display(), channels);
    }
    let samples = reader
        .samples::<i16>()
        .step_by(channels)
        .map(|s| s.map(|v| v as f32 / 32768.0))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PcmAudio::mono(samples, spec.sample_rate))
}

/// Audio to formant raster with the default silence rule.
pub fn formant_raster_from_audio(
    audio: &PcmAudio,
    cfg: &FilterbankConfig,
    k: usize,
) -> Result<crate::raster::SpikeRaster, FrontendError> {
    let energies = filterbank_energies(audio, cfg)?;
    let frames = extract_formants(&energies, k, default_silence_threshold(&energies))?;
    encode_formant_spikes(&frames, cfg.n_bands)
}

/// Reads `bin,b0,b1,b2,b3` rows (band indices, `-1` for silence). Missing
/// bins are silent; the frame count is one past the largest bin.
pub fn read_formant_csv<R: BufRead>(r: R, origin: &str) -> Result<Vec<FormantFrame>, FrontendError> {
    let err = |line: usize, msg: String| FrontendError::Parse {
        path: format!("{origin}:{line}"),
        msg,
    };
    let mut rows: Vec<(usize, FormantFrame)> = Vec::new();
    let mut header_seen = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            header_seen = true;
            if line.starts_with("bin") {
                continue;
            }
        }
        let mut fields = line.split(',').map(str::trim);
        let bin: usize = fields
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|e| err(i + 1, format!("bad bin: {e}")))?;
        let mut bands = Vec::new();
        for f in fields {
            let v: i64 = f.parse().map_err(|e| err(i + 1, format!("bad band `{f}`: {e}")))?;
            if v >= 0 {
                bands.push(v as usize);
            }
        }
        let frame = FormantFrame::new(bands).map_err(|e| err(i + 1, e.to_string()))?;
        rows.push((bin, frame));
    }
    let n = rows.iter().map(|(b, _)| b + 1).max().unwrap_or(0);
    let mut frames = vec![FormantFrame::silent(); n];
    for (bin, f) in rows {
        frames[bin] = f;
    }
    Ok(frames)
}

/// Writes frames as `bin,b0,..` with `-1` padding to `k` columns.
pub fn write_formant_csv<W: Write>(frames: &[FormantFrame], k: usize, mut w: W) -> std::io::Result<()> {
    let header: Vec<String> = (0..k).map(|i| format!("b{i}")).collect();
    writeln!(w, "bin,{}", header.join(","))?;
    for (bin, f) in frames.iter().enumerate() {
        let cols: Vec<String> = (0..k)
            .map(|i| f.bands().get(i).map_or("-1".to_string(), |b| b.to_string()))
            .collect();
        writeln!(w, "{bin},{}", cols.join(","))?;
    }
    Ok(())
}

/// Formant frames of a raster with exactly one frame per bin.
pub fn frames_from_raster(raster: &crate::raster::SpikeRaster) -> Vec<FormantFrame> {
    let mut bands: Vec<Vec<usize>> = vec![Vec::new(); raster.n_bins()];
    for (bin, ch) in raster.events() {
        bands[bin].push(ch);
    }
    bands
        .into_iter()
        .map(|b| FormantFrame::new(b).expect("raster channels are distinct per bin"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: u32,
    pub speaker: String,
    pub split: SplitRole,
}

/// Parses a label given as an integer or a digit name ("oh", "zero", ...).
pub fn parse_label(s: &str) -> Option<u32> {
    let s = s.trim();
    s.parse()
        .ok()
        .or_else(|| DIGIT_NAMES.iter().position(|n| n.eq_ignore_ascii_case(s)).map(|p| p as u32))
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    path: String,
    label: String,
    speaker: String,
    split: String,
}

/// Reads a `path,label,speaker,split` manifest. Relative paths resolve
/// against the manifest's directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, FrontendError> {
    let base = path.parent().unwrap_or(Path::new("."));
    let origin = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| FrontendError::Parse {
            path: origin.clone(),
            msg: e.to_string(),
        })?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| FrontendError::Parse {
            path: origin.clone(),
            msg: e.to_string(),
        })?;
        let bad = |msg: String| FrontendError::Parse {
            path: format!("{origin}:{}", i + 2),
            msg,
        };
        let label = parse_label(&row.label).ok_or_else(|| bad(format!("unknown label `{}`", row.label)))?;
        let split = match row.split.to_ascii_lowercase().as_str() {
            "train" => SplitRole::Train,
            "test" => SplitRole::Test,
            other => return Err(bad(format!("split must be train or test, got `{other}`"))),
        };
        let p = PathBuf::from(&row.path);
        out.push(ManifestEntry {
            path: if p.is_absolute() { p } else { base.join(p) },
            label,
            speaker: row.speaker,
            split,
        });
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(entries: &[ManifestEntry], mut w: W) -> std::io::Result<()> {
    writeln!(w, "path,label,speaker,split")?;
    for e in entries {
        writeln!(w, "{},{},{},{}", e.path.display(), e.label, e.speaker, e.split.as_str())?;
    }
    Ok(())
}

/// Loads one manifest entry: `.wav` files go through the filterbank, any
/// other extension is read as a formant CSV.
pub fn load_entry(entry: &ManifestEntry, cfg: &FilterbankConfig, k: usize) -> Result<LabeledSample, FrontendError> {
    let is_wav = entry
        .path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    let raster = if is_wav {
        formant_raster_from_audio(&read_wav(&entry.path)?, cfg, k)?
    } else {
        let file = std::fs::File::open(&entry.path)?;
        let frames = read_formant_csv(std::io::BufReader::new(file), &entry.path.display().to_string())?;
        encode_formant_spikes(&frames, cfg.n_bands)?
    };
    LabeledSample::new(raster, entry.label, entry.speaker.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formant_csv_round_trip() {
        let frames = vec![
            FormantFrame::new(vec![1, 5, 9, 20]).unwrap(),
            FormantFrame::silent(),
            FormantFrame::new(vec![0, 2, 4, 31]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_formant_csv(&frames, 4, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("bin,b0,b1,b2,b3\n0,1,5,9,20\n1,-1,-1,-1,-1\n"));
        let back = read_formant_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, frames);
    }

    #[test]
    fn formant_csv_rejects_duplicate_bands() {
        let text = "bin,b0,b1,b2,b3\n0,1,1,2,3\n";
        assert!(read_formant_csv(text.as_bytes(), "mem").is_err());
    }

    #[test]
    fn labels_by_name_or_number() {
        assert_eq!(parse_label("oh"), Some(0));
        assert_eq!(parse_label("Nine"), Some(10));
        assert_eq!(parse_label("3"), Some(3));
        assert_eq!(parse_label("eleven"), None);
    }

    #[test]
    fn wav_stereo_keeps_first_channel() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        for i in 0..320i16 {
            w.write_sample(i).unwrap();
            w.write_sample(-1000i16).unwrap();
        }
        w.finalize().unwrap();
        let audio = read_wav(&path).unwrap();
        assert_eq!(audio.channels, 1);
        assert_eq!(audio.samples.len(), 320);
        assert!(audio.samples.iter().all(|&s| s >= 0.0));
        let raster = formant_raster_from_audio(&audio, &FilterbankConfig::default(), 4).unwrap();
        assert_eq!(raster.n_bins(), 20);
    }

    #[test]
    fn manifest_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let frames_path = dir.path().join("a.csv");
        let frames = vec![FormantFrame::new(vec![0, 1, 2, 3]).unwrap(); 5];
        write_formant_csv(&frames, 4, std::fs::File::create(&frames_path).unwrap()).unwrap();
        let manifest = dir.path().join("manifest.csv");
        std::fs::write(&manifest, "path,label,speaker,split\na.csv,zero,spk1,train\n").unwrap();
        let entries = read_manifest(&manifest).unwrap();
        assert_eq!(entries[0].path, frames_path);
        assert_eq!(entries[0].label, 1);
        let sample = load_entry(&entries[0], &FilterbankConfig::default(), 4).unwrap();
        assert_eq!(sample.raster.total_spikes(), 20);
    }
}
