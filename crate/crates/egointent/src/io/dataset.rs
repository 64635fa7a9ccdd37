//! Line-oriented text format for detection datasets.
//!
//! ```text
//! egods 1
//! dims 160 120
//! frames 2
//! frame img-000
//! image_ref images/img-000.pgm
//! detections 1
//! box 10 20 30 60 0.9
//! kp 25 28 0.8
//! ...                      (18 keypoint lines per detection)
//! end
//! frame img-001
//! detections 0
//! end
//! annotations 1
//! ann img-000 10 20 30 60
//! ```
//!
//! `image_ref` is optional. Every float is written in shortest
//! round-trip form, so loading a saved file reproduces the dataset
//! exactly.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::{
    parts, DatasetFile, Frame, GTAnnotation, Keypoint, PersonDetection, DATASET_FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::grid::{BBox, GridDims};

/// Serializes a dataset to the text format.
pub fn render_dataset(ds: &DatasetFile) -> Result<String> {
    ds.validate()?;
    for frame in &ds.frames {
        if frame.image_id.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!(
                "image id {:?} contains whitespace and cannot be saved",
                frame.image_id
            )));
        }
    }
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "egods {DATASET_FORMAT_VERSION}").expect("string write");
    writeln!(w, "dims {} {}", ds.dims.width(), ds.dims.height()).expect("string write");
    writeln!(w, "frames {}", ds.frames.len()).expect("string write");
    for frame in &ds.frames {
        writeln!(w, "frame {}", frame.image_id).expect("string write");
        if let Some(path) = &frame.image_ref {
            writeln!(w, "image_ref {path}").expect("string write");
        }
        writeln!(w, "detections {}", frame.detections.len()).expect("string write");
        for det in &frame.detections {
            let b = &det.bbox;
            writeln!(w, "box {} {} {} {} {}", b.x, b.y, b.w, b.h, b.c).expect("string write");
            for kp in &det.keypoints {
                writeln!(w, "kp {} {} {}", kp.x, kp.y, kp.score).expect("string write");
            }
        }
        writeln!(w, "end").expect("string write");
    }
    writeln!(w, "annotations {}", ds.annotations.len()).expect("string write");
    for ann in &ds.annotations {
        let b = &ann.cooperator_box;
        writeln!(w, "ann {} {} {} {} {}", ann.image_id, b.x, b.y, b.w, b.h)
            .expect("string write");
    }
    Ok(out)
}

pub fn save_dataset(ds: &DatasetFile, path: impl AsRef<Path>) -> Result<()> {
    let text = render_dataset(ds)?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetFile> {
    let text = std::fs::read_to_string(path)?;
    parse_dataset(&text)
}

struct LineReader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        LineReader {
            lines: text.lines().enumerate(),
        }
    }

    /// Next non-blank line as (1-based number, tokens).
    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (idx, line) in self.lines.by_ref() {
            if !line.trim().is_empty() {
                return Some((idx + 1, line.split_whitespace().collect()));
            }
        }
        None
    }

    /// Next line, which must start with `keyword`; returns the remaining
    /// tokens.
    fn expect(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.next() {
            Some((num, mut tokens)) => {
                if tokens.first() != Some(&keyword) {
                    return Err(Error::Parse {
                        line: num,
                        message: format!(
                            "expected `{keyword}`, found `{}`",
                            tokens.first().unwrap_or(&"")
                        ),
                    });
                }
                tokens.remove(0);
                Ok((num, tokens))
            }
            None => Err(Error::Parse {
                line: 0,
                message: format!("unexpected end of file, expected `{keyword}`"),
            }),
        }
    }
}

fn field<T: std::str::FromStr>(tokens: &[&str], idx: usize, line: usize, what: &str) -> Result<T> {
    let tok = tokens.get(idx).ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what}: `{tok}`"),
    })
}

fn parse_box(tokens: &[&str], line: usize, with_conf: bool) -> Result<BBox> {
    let x = field(tokens, 0, line, "box x")?;
    let y = field(tokens, 1, line, "box y")?;
    let w = field(tokens, 2, line, "box width")?;
    let h = field(tokens, 3, line, "box height")?;
    let c = if with_conf {
        field(tokens, 4, line, "box confidence")?
    } else {
        1.0
    };
    BBox::new(x, y, w, h, c).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })
}

/// Parses the text format. Errors carry the offending 1-based line number.
pub fn parse_dataset(text: &str) -> Result<DatasetFile> {
    let mut r = LineReader::new(text);

    let (num, tokens) = r.expect("egods")?;
    let version: u32 = field(&tokens, 0, num, "format version")?;
    if version != DATASET_FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            supported: DATASET_FORMAT_VERSION,
        });
    }

    let (num, tokens) = r.expect("dims")?;
    let width: usize = field(&tokens, 0, num, "grid width")?;
    let height: usize = field(&tokens, 1, num, "grid height")?;
    let dims = GridDims::new(width, height).map_err(|e| Error::Parse {
        line: num,
        message: e.to_string(),
    })?;

    let (num, tokens) = r.expect("frames")?;
    let frame_count: usize = field(&tokens, 0, num, "frame count")?;

    let mut frames = Vec::with_capacity(frame_count);
    for _ in 0..frame_count {
        let (num, tokens) = r.expect("frame")?;
        let image_id = tokens
            .first()
            .ok_or_else(|| Error::Parse {
                line: num,
                message: "missing image id".into(),
            })?
            .to_string();

        let (num, mut tokens) = r.expect_one_of(&["image_ref", "detections"])?;
        let mut image_ref = None;
        let (num, tokens) = if tokens.first() == Some(&"image_ref") {
            tokens.remove(0);
            image_ref = Some(tokens.join(" "));
            let (num, mut t) = r.expect_one_of(&["detections"])?;
            t.remove(0);
            (num, t)
        } else {
            tokens.remove(0);
            (num, tokens)
        };
        let det_count: usize = field(&tokens, 0, num, "detection count")?;

        let mut detections = Vec::with_capacity(det_count);
        for person in 0..det_count {
            let (num, tokens) = r.expect("box").map_err(|e| at_person(e, &image_id, person))?;
            let bbox = parse_box(&tokens, num, true)?;
            let mut kps = [Keypoint::absent(); parts::COUNT];
            for (slot, kp) in kps.iter_mut().enumerate() {
                let (num, tokens) = r.expect("kp").map_err(|e| match e {
                    Error::Parse { line, .. } => Error::Parse {
                        line,
                        message: format!(
                            "frame {image_id} person {person}: expected {} keypoint lines, found {slot}",
                            parts::COUNT
                        ),
                    },
                    other => other,
                })?;
                let x = field(&tokens, 0, num, "keypoint x")?;
                let y = field(&tokens, 1, num, "keypoint y")?;
                let score = field(&tokens, 2, num, "keypoint score")?;
                *kp = Keypoint { x, y, score };
            }
            let det = PersonDetection::new(bbox, kps).map_err(|e| Error::Parse {
                line: num,
                message: format!("frame {image_id} person {person}: {e}"),
            })?;
            detections.push(det);
        }

        let (_, _) = r.expect("end").map_err(|e| match e {
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("frame {image_id}: {message}"),
            },
            other => other,
        })?;
        frames.push(Frame {
            image_id,
            dims,
            detections,
            image_ref,
        });
    }

    let (num, tokens) = r.expect("annotations")?;
    let ann_count: usize = field(&tokens, 0, num, "annotation count")?;
    let mut annotations = Vec::with_capacity(ann_count);
    for _ in 0..ann_count {
        let (num, tokens) = r.expect("ann")?;
        let image_id = tokens
            .first()
            .ok_or_else(|| Error::Parse {
                line: num,
                message: "missing image id".into(),
            })?
            .to_string();
        let cooperator_box = parse_box(&tokens[1..], num, false)?;
        annotations.push(GTAnnotation {
            image_id,
            cooperator_box,
        });
    }

    if let Some((num, tokens)) = r.next() {
        return Err(Error::Parse {
            line: num,
            message: format!("unexpected trailing content: `{}`", tokens.join(" ")),
        });
    }

    let ds = DatasetFile {
        format_version: version,
        dims,
        frames,
        annotations,
    };
    ds.validate()?;
    Ok(ds)
}

fn at_person(e: Error, image_id: &str, person: usize) -> Error {
    match e {
        Error::Parse { line, message } => Error::Parse {
            line,
            message: format!("frame {image_id} person {person}: {message}"),
        },
        other => other,
    }
}

impl<'a> LineReader<'a> {
    /// Next line, which must start with one of `keywords`; the keyword
    /// token is left in place.
    fn expect_one_of(&mut self, keywords: &[&str]) -> Result<(usize, Vec<&'a str>)> {
        match self.next() {
            Some((num, tokens)) => {
                if tokens.first().map_or(false, |t| keywords.contains(t)) {
                    Ok((num, tokens))
                } else {
                    Err(Error::Parse {
                        line: num,
                        message: format!(
                            "expected one of {keywords:?}, found `{}`",
                            tokens.first().unwrap_or(&"")
                        ),
                    })
                }
            }
            None => Err(Error::Parse {
                line: 0,
                message: format!("unexpected end of file, expected one of {keywords:?}"),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic, SynthConfig};

    fn sample() -> DatasetFile {
        let cfg = SynthConfig {
            frame_count: 4,
            players_per_frame: 3,
            ..Default::default()
        };
        let mut ds = generate_synthetic(&cfg).unwrap().dataset;
        ds.frames[1].image_ref = Some("images/frame 1.pgm".into());
        ds
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = sample();
        let text = render_dataset(&ds).unwrap();
        let back = parse_dataset(&text).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.egods");
        let ds = sample();
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn rejects_newer_version() {
        let text = render_dataset(&sample()).unwrap();
        let text = text.replacen("egods 1", "egods 2", 1);
        match parse_dataset(&text) {
            Err(Error::UnsupportedVersion { found, supported }) => {
                assert_eq!(found, 2);
                assert_eq!(supported, 1);
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn missing_keypoint_names_person_and_frame() {
        let text = render_dataset(&sample()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        let last_kp = lines
            .iter()
            .rposition(|l| l.starts_with("kp "))
            .unwrap();
        let dropped: String = lines
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != last_kp)
            .map(|(_, l)| format!("{l}\n"))
            .collect();
        match parse_dataset(&dropped) {
            Err(Error::Parse { message, .. }) => {
                assert!(message.contains("person 2"), "message: {message}");
                assert!(message.contains("frame frame-00003"), "message: {message}");
                assert!(message.contains("found 17"), "message: {message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = render_dataset(&sample()).unwrap();
        let mangled = text.replacen("dims 160 120", "dims 160 oops", 1);
        match parse_dataset(&mangled) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("grid height"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_trailing_content() {
        let mut text = render_dataset(&sample()).unwrap();
        text.push_str("extra stuff\n");
        assert!(matches!(
            parse_dataset(&text),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn rejects_whitespace_in_image_id() {
        let mut ds = sample();
        ds.frames[0].image_id = "bad id".into();
        ds.annotations[0].image_id = "bad id".into();
        assert!(render_dataset(&ds).is_err());
    }

    #[test]
    fn image_ref_with_spaces_survives() {
        let ds = sample();
        let text = render_dataset(&ds).unwrap();
        let back = parse_dataset(&text).unwrap();
        assert_eq!(
            back.frames[1].image_ref.as_deref(),
            Some("images/frame 1.pgm")
        );
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = DatasetFile::new(GridDims::new(8, 6).unwrap());
        let back = parse_dataset(&render_dataset(&ds).unwrap()).unwrap();
        assert_eq!(ds, back);
    }
}
