use std::fs;
use std::io::Read;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::frame::{resize_frame, Frame, FrameSequence};
use crate::error::{input_err, Error, Result};

/// File name of the metadata record inside a frame archive directory.
pub const ARCHIVE_META: &str = "meta.json";
/// Subdirectory holding the numbered frame images.
pub const ARCHIVE_FRAMES: &str = "frames";

const CONTAINER_EXTENSIONS: &[&str] = &["mp4", "avi", "mkv", "mov", "webm", "mpg", "mpeg", "m4v"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    /// Lossless directory of numbered PNG frames plus `meta.json`.
    FrameArchive,
    /// Compressed container decoded through an external `ffmpeg`.
    Container,
}

/// Metadata record of a frame archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    pub video_id: String,
    pub frame_count: usize,
    pub fps: f64,
    pub height: usize,
    pub width: usize,
}

/// Decoder settings for container inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub ffmpeg: PathBuf,
    pub ffprobe: PathBuf,
    /// Resample containers to this rate; `None` keeps the native rate.
    /// Frame archives are always read at their stored rate.
    pub fps: Option<f64>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            ffmpeg: PathBuf::from("ffmpeg"),
            ffprobe: PathBuf::from("ffprobe"),
            fps: None,
        }
    }
}

/// An untrimmed input video. Frames are decoded on demand by range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawVideo {
    pub video_id: String,
    pub source_path: PathBuf,
    pub frame_count: usize,
    pub fps: f64,
    pub native_height: usize,
    pub native_width: usize,
    pub format: SourceFormat,
    #[serde(skip)]
    decode: DecodeConfig,
}

fn frame_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(ARCHIVE_FRAMES).join(format!("{index:06}.png"))
}

impl RawVideo {
    /// Opens a frame archive directory or a container file.
    pub fn open(path: impl AsRef<Path>, decode: &DecodeConfig) -> Result<Self> {
        let path = path.as_ref();
        if path.join(ARCHIVE_META).is_file() {
            Self::open_archive(path)
        } else if path.is_file() {
            Self::open_container(path, decode)
        } else {
            Err(Error::Decode {
                path: path.to_path_buf(),
                message: "neither a frame archive nor a video file".into(),
            })
        }
    }

    fn open_archive(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(ARCHIVE_META);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: ArchiveMeta = serde_json::from_str(&text).map_err(|e| Error::format(&meta_path, e.to_string()))?;
        if meta.height == 0 || meta.width == 0 || !(meta.fps > 0.0) {
            return Err(Error::format(&meta_path, "non-positive dimensions or fps"));
        }
        Ok(Self {
            video_id: meta.video_id,
            source_path: dir.to_path_buf(),
            frame_count: meta.frame_count,
            fps: meta.fps,
            native_height: meta.height,
            native_width: meta.width,
            format: SourceFormat::FrameArchive,
            decode: DecodeConfig::default(),
        })
    }

    fn open_container(path: &Path, decode: &DecodeConfig) -> Result<Self> {
        let probe = Command::new(&decode.ffprobe)
            .args([
                "-v",
                "error",
                "-select_streams",
                "v:0",
                "-show_entries",
                "stream=width,height,r_frame_rate",
                "-of",
                "json",
            ])
            .arg(path)
            .output()
            .map_err(|e| Error::Decode {
                path: path.to_path_buf(),
                message: format!("cannot run {}: {e}", decode.ffprobe.display()),
            })?;
        if !probe.status.success() {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: String::from_utf8_lossy(&probe.stderr).trim().to_string(),
            });
        }
        let info: serde_json::Value =
            serde_json::from_slice(&probe.stdout).map_err(|e| Error::format(path, format!("ffprobe output: {e}")))?;
        let stream = &info["streams"][0];
        let width = stream["width"].as_u64().unwrap_or(0) as usize;
        let height = stream["height"].as_u64().unwrap_or(0) as usize;
        let native_fps = parse_rate(stream["r_frame_rate"].as_str().unwrap_or(""));
        if width == 0 || height == 0 || native_fps.is_none() {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                message: "no decodable video stream".into(),
            });
        }
        let video_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut video = Self {
            video_id,
            source_path: path.to_path_buf(),
            frame_count: 0,
            fps: decode.fps.or(native_fps).unwrap_or(1.0),
            native_height: height,
            native_width: width,
            format: SourceFormat::Container,
            decode: decode.clone(),
        };
        // Count what the decoder actually yields rather than trusting headers.
        video.frame_count = video.stream_container(None, |_| Ok(()))?;
        Ok(video)
    }

    fn check_range(&self, range: &Range<usize>) -> Result<()> {
        if range.start >= range.end || range.end > self.frame_count {
            return Err(input_err!(
                "frame range {}..{} invalid for video {} with {} frames",
                range.start,
                range.end,
                self.video_id,
                self.frame_count
            ));
        }
        Ok(())
    }

    /// Decodes `range` at native resolution.
    pub fn decode_native(&self, range: Range<usize>) -> Result<FrameSequence> {
        self.check_range(&range)?;
        let frames = match self.format {
            SourceFormat::FrameArchive => range.map(|i| self.read_archive_frame(i)).collect::<Result<Vec<_>>>()?,
            SourceFormat::Container => {
                let mut frames = Vec::with_capacity(range.len());
                self.stream_container(Some(range.clone()), |f| {
                    frames.push(f);
                    Ok(())
                })?;
                if frames.len() != range.len() {
                    return Err(Error::Decode {
                        path: self.source_path.clone(),
                        message: format!("expected {} frames, decoded {}", range.len(), frames.len()),
                    });
                }
                frames
            }
        };
        FrameSequence::new(frames)
    }

    /// Decodes `range` and resizes every frame to the canonical 128x171.
    pub fn decode_frames(&self, range: Range<usize>) -> Result<FrameSequence> {
        let native = self.decode_native(range)?;
        let frames = native
            .into_frames()
            .iter()
            .map(resize_frame)
            .collect::<Result<Vec<_>>>()?;
        FrameSequence::new(frames)
    }

    /// Decodes a single frame at canonical size.
    pub fn decode_frame(&self, index: usize) -> Result<Frame> {
        Ok(self
            .decode_frames(index..index + 1)?
            .into_frames()
            .pop()
            .expect("one frame"))
    }

    fn read_archive_frame(&self, index: usize) -> Result<Frame> {
        let path = frame_file(&self.source_path, index);
        let img = image::open(&path).map_err(|e| Error::Decode {
            path: path.clone(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        if rgb.height() as usize != self.native_height || rgb.width() as usize != self.native_width {
            return Err(Error::Decode {
                path,
                message: "frame size differs from archive metadata".into(),
            });
        }
        Ok(rgb)
    }

    /// Runs ffmpeg and hands each decoded frame within `range` (all frames when
    /// `None`) to `sink`. Returns the number of frames produced.
    fn stream_container(
        &self,
        range: Option<Range<usize>>,
        mut sink: impl FnMut(Frame) -> Result<()>,
    ) -> Result<usize> {
        let mut filters = Vec::new();
        if let Some(fps) = self.decode.fps {
            filters.push(format!("fps={fps}"));
        }
        if let Some(r) = &range {
            filters.push(format!("select=between(n\\,{}\\,{})", r.start, r.end - 1));
        }
        let mut cmd = Command::new(&self.decode.ffmpeg);
        cmd.args(["-v", "error", "-nostdin", "-i"]).arg(&self.source_path);
        if !filters.is_empty() {
            cmd.args(["-vf", &filters.join(",")]);
        }
        cmd.args(["-vsync", "0", "-f", "rawvideo", "-pix_fmt", "rgb24", "pipe:1"])
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let mut child = cmd.spawn().map_err(|e| Error::Decode {
            path: self.source_path.clone(),
            message: format!("cannot run {}: {e}", self.decode.ffmpeg.display()),
        })?;
        let frame_bytes = self.native_height * self.native_width * 3;
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut buf = vec![0u8; frame_bytes];
        let mut count = 0;
        loop {
            match stdout.read_exact(&mut buf) {
                Ok(()) => {
                    let frame = Frame::from_raw(self.native_width as u32, self.native_height as u32, buf.clone())
                        .expect("buffer sized for frame");
                    sink(frame)?;
                    count += 1;
                }
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(Error::io(&self.source_path, e)),
            }
        }
        let out = child.wait_with_output().map_err(|e| Error::io(&self.source_path, e))?;
        if !out.status.success() {
            return Err(Error::Decode {
                path: self.source_path.clone(),
                message: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        Ok(count)
    }
}

fn parse_rate(s: &str) -> Option<f64> {
    let (num, den) = s.split_once('/').unwrap_or((s, "1"));
    let (n, d): (f64, f64) = (num.trim().parse().ok()?, den.trim().parse().ok()?);
    (n > 0.0 && d > 0.0).then(|| n / d)
}

/// Writes frames as a lossless archive under `dir`.
pub fn write_archive<'a>(
    dir: impl AsRef<Path>,
    video_id: &str,
    fps: f64,
    frames: impl IntoIterator<Item = &'a Frame>,
) -> Result<RawVideo> {
    let dir = dir.as_ref();
    let frames_dir = dir.join(ARCHIVE_FRAMES);
    fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let mut count = 0;
    let mut dims = None;
    for (i, frame) in frames.into_iter().enumerate() {
        let d = (frame.height() as usize, frame.width() as usize);
        if *dims.get_or_insert(d) != d {
            return Err(input_err!("archive frames must share one size"));
        }
        let path = frame_file(dir, i);
        write_png(&path, frame)?;
        count += 1;
    }
    let (height, width) = dims.ok_or_else(|| input_err!("cannot archive a video with no frames"))?;
    let meta = ArchiveMeta {
        video_id: video_id.to_string(),
        frame_count: count,
        fps,
        height,
        width,
    };
    let meta_path = dir.join(ARCHIVE_META);
    let text = serde_json::to_string_pretty(&meta).expect("serializable meta");
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    RawVideo::open_archive(dir)
}

fn write_png(path: &Path, frame: &Frame) -> Result<()> {
    use image::codecs::png::{CompressionType, FilterType, PngEncoder};
    use image::ImageEncoder;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let encoder = PngEncoder::new_with_quality(std::io::BufWriter::new(file), CompressionType::Fast, FilterType::Sub);
    encoder
        .write_image(
            frame.as_raw(),
            frame.width(),
            frame.height(),
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))
}

/// Finds every frame archive and container file directly under `dir`,
/// ordered by video id. Video ids must be unique.
pub fn discover_videos(dir: impl AsRef<Path>, decode: &DecodeConfig) -> Result<Vec<RawVideo>> {
    let dir = dir.as_ref();
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_archive = path.join(ARCHIVE_META).is_file();
        let is_container = path.is_file()
            && path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| CONTAINER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_archive || is_container {
            paths.push(path);
        }
    }
    paths.sort();
    let mut videos = paths
        .iter()
        .map(|p| RawVideo::open(p, decode))
        .collect::<Result<Vec<_>>>()?;
    videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
    for pair in videos.windows(2) {
        if pair[0].video_id == pair[1].video_id {
            return Err(input_err!("duplicate video id {}", pair[0].video_id));
        }
    }
    Ok(videos)
}
