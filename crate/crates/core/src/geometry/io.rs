//! ASCII point-cloud format: one point per line,
//! `x y z [segment_id] [category_label]`, whitespace separated.
//! `#` starts a comment; segment id `-1` marks an unlabeled point.

use std::fmt::Write as _;
use std::io::BufRead;

use nalgebra::Vector3;

use super::{GeometryError, PointCloud};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AsciiCloud {
    pub cloud: PointCloud,
    /// First category label found in the file.
    pub category_label: Option<String>,
}

pub fn read_ascii(reader: impl BufRead) -> Result<AsciiCloud, GeometryError> {
    let mut points = Vec::new();
    let mut ids: Vec<Option<u32>> = Vec::new();
    let mut any_id = false;
    let mut label = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() < 3 {
            return Err(GeometryError::Parse {
                line: lineno + 1,
                message: format!("expected at least 3 columns, got {}", fields.len()),
            });
        }
        let mut xyz = [0.0; 3];
        for (slot, field) in xyz.iter_mut().zip(&fields[..3]) {
            *slot = field.parse::<f64>().map_err(|e| GeometryError::Parse {
                line: lineno + 1,
                message: format!("bad coordinate `{field}`: {e}"),
            })?;
            if !slot.is_finite() {
                return Err(GeometryError::Parse {
                    line: lineno + 1,
                    message: "non-finite coordinate".into(),
                });
            }
        }
        points.push(Vector3::from(xyz));
        let id = match fields.get(3) {
            None => None,
            Some(f) => {
                any_id = true;
                let v: i64 = f.parse().map_err(|e| GeometryError::Parse {
                    line: lineno + 1,
                    message: format!("bad segment id `{f}`: {e}"),
                })?;
                u32::try_from(v).ok()
            }
        };
        ids.push(id);
        if label.is_none() {
            if let Some(l) = fields.get(4) {
                label = Some(l.to_string());
            }
        }
    }
    let mut cloud = PointCloud::new(points);
    if any_id {
        cloud.segment_ids = Some(ids);
    }
    Ok(AsciiCloud {
        cloud,
        category_label: label,
    })
}

pub fn write_ascii(cloud: &PointCloud, category_label: Option<&str>) -> String {
    let mut out = String::from("# x y z segment_id category_label\n");
    for (i, p) in cloud.points.iter().enumerate() {
        write!(out, "{} {} {}", p.x, p.y, p.z).unwrap();
        if let Some(ids) = &cloud.segment_ids {
            match ids[i] {
                Some(id) => write!(out, " {id}").unwrap(),
                None => out.push_str(" -1"),
            }
            if let Some(l) = category_label {
                write!(out, " {l}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_optional_columns_and_comments() {
        let text = "# header\n0 0 1\n1 2 3 4 box # trailing\n\n0.5 0.5 0.5 -1\n";
        let parsed = read_ascii(text.as_bytes()).unwrap();
        assert_eq!(parsed.cloud.len(), 3);
        assert_eq!(parsed.cloud.segment_ids, Some(vec![None, Some(4), None]));
        assert_eq!(parsed.category_label.as_deref(), Some("box"));
    }

    #[test]
    fn plain_xyz_has_no_ids() {
        let parsed = read_ascii("1 2 3\n4 5 6\n".as_bytes()).unwrap();
        assert!(parsed.cloud.segment_ids.is_none());
        assert!(parsed.category_label.is_none());
    }

    #[test]
    fn rejects_short_lines() {
        let err = read_ascii("1 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, GeometryError::Parse { line: 1, .. }));
    }

    #[test]
    fn write_then_read_is_lossless() {
        let mut cloud = PointCloud::new(vec![Vector3::new(0.1, -0.2, 1.0 / 3.0), Vector3::new(1e-9, 2.0, 3.0)]);
        cloud.segment_ids = Some(vec![Some(0), None]);
        let text = write_ascii(&cloud, Some("can"));
        let back = read_ascii(text.as_bytes()).unwrap();
        assert_eq!(back.cloud, cloud);
        assert_eq!(back.category_label.as_deref(), Some("can"));
    }
}
