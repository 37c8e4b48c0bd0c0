//! Camera files are TOML with four keys:
//!
//! ```toml
//! width = 128
//! height = 96
//! intrinsics = [[100.0, 0.0, 64.0], [0.0, 100.0, 48.0], [0.0, 0.0, 1.0]]
//! cam2world = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
//! ```

use std::path::Path;

use toml::{Table, Value};

use super::FormatError;
use crate::camera::CameraModel;
use crate::geometry::{Mat3, Vec3};

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

fn matrix<const R: usize, const C: usize>(
    table: &Table,
    key: &'static str,
) -> Result<[[f64; C]; R], FormatError> {
    let rows = table
        .get(key)
        .ok_or(FormatError::MissingKey(key))?
        .as_array()
        .filter(|a| a.len() == R)
        .ok_or_else(|| FormatError::BadShape(format!("{key} must be {R}x{C}")))?;
    let mut out = [[0.0; C]; R];
    for (r, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .filter(|a| a.len() == C)
            .ok_or_else(|| FormatError::BadShape(format!("{key} must be {R}x{C}")))?;
        for (c, v) in row.iter().enumerate() {
            out[r][c] = number(v)
                .ok_or_else(|| FormatError::BadShape(format!("{key}[{r}][{c}] is not a number")))?;
        }
    }
    Ok(out)
}

fn dimension(table: &Table, key: &'static str) -> Result<usize, FormatError> {
    table
        .get(key)
        .ok_or(FormatError::MissingKey(key))?
        .as_integer()
        .filter(|&v| v > 0)
        .map(|v| v as usize)
        .ok_or_else(|| FormatError::BadShape(format!("{key} must be a positive integer")))
}

pub fn parse_camera(text: &str) -> Result<CameraModel, FormatError> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| FormatError::Syntax(e.to_string()))?;
    let width = dimension(&table, "width")?;
    let height = dimension(&table, "height")?;
    let k = matrix::<3, 3>(&table, "intrinsics")?;
    let pose = matrix::<4, 4>(&table, "cam2world")?;
    if pose[3] != [0.0, 0.0, 0.0, 1.0] {
        return Err(FormatError::BadShape(
            "cam2world bottom row must be (0, 0, 0, 1)".into(),
        ));
    }
    let rotation = Mat3::from_rows([
        [pose[0][0], pose[0][1], pose[0][2]],
        [pose[1][0], pose[1][1], pose[1][2]],
        [pose[2][0], pose[2][1], pose[2][2]],
    ]);
    let translation = Vec3::new(pose[0][3], pose[1][3], pose[2][3]);
    Ok(CameraModel::new(
        Mat3::from_rows(k),
        rotation,
        translation,
        width,
        height,
    )?)
}

fn fmt_row(vals: &[f64]) -> String {
    let items: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
    format!("[{}]", items.join(", "))
}

pub fn camera_to_string(cam: &CameraModel) -> String {
    let k = cam.intrinsics();
    let r = cam.rotation();
    let t = cam.translation().to_array();
    let krows: Vec<String> = k.m.iter().map(|row| fmt_row(row)).collect();
    let mut prows: Vec<String> = (0..3)
        .map(|i| fmt_row(&[r.m[i][0], r.m[i][1], r.m[i][2], t[i]]))
        .collect();
    prows.push(fmt_row(&[0.0, 0.0, 0.0, 1.0]));
    format!(
        "width = {}\nheight = {}\nintrinsics = [{}]\ncam2world = [{}]\n",
        cam.width(),
        cam.height(),
        krows.join(", "),
        prows.join(", ")
    )
}

pub fn read_camera(path: impl AsRef<Path>) -> Result<CameraModel, FormatError> {
    parse_camera(&std::fs::read_to_string(path)?)
}

pub fn write_camera(cam: &CameraModel, path: impl AsRef<Path>) -> Result<(), FormatError> {
    std::fs::write(path, camera_to_string(cam))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "width = 128\nheight = 128\nintrinsics = [[100, 0, 64], [0, 100, 64], [0, 0, 1]]\ncam2world = [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]\n";

    #[test]
    fn parses_identity_camera() {
        let cam = parse_camera(BASIC).unwrap();
        assert_eq!(cam.width(), 128);
        assert_eq!(cam.intrinsics().m[0], [100.0, 0.0, 64.0]);
        assert_eq!(*cam.rotation(), Mat3::IDENTITY);
    }

    #[test]
    fn scaled_rotation_rejected() {
        let text = BASIC.replace(
            "[[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]",
            "[[2, 0, 0, 0], [0, 2, 0, 0], [0, 0, 2, 0]",
        );
        assert!(matches!(
            parse_camera(&text),
            Err(FormatError::NonOrthonormalRotation(_))
        ));
    }

    #[test]
    fn missing_width() {
        let text = BASIC.replace("width = 128\n", "");
        assert!(matches!(
            parse_camera(&text),
            Err(FormatError::MissingKey("width"))
        ));
    }

    #[test]
    fn bad_shapes() {
        let text = BASIC.replace("[0, 0, 1]]", "[0, 0]]");
        assert!(matches!(parse_camera(&text), Err(FormatError::BadShape(_))));
        let text = BASIC.replace("[0, 0, 0, 1]]", "[0, 0, 1, 1]]");
        assert!(matches!(parse_camera(&text), Err(FormatError::BadShape(_))));
        let text = BASIC.replace("height = 128", "height = -3");
        assert!(matches!(parse_camera(&text), Err(FormatError::BadShape(_))));
    }

    #[test]
    fn writer_round_trips_exactly() {
        let cam = CameraModel::new(
            Mat3::from_rows([[123.456, 0.0, 31.5], [0.0, 120.0, 23.25], [0.0, 0.0, 1.0]]),
            Mat3::from_axis_angle(Vec3::new(0.3, -1.0, 0.2), 0.7),
            Vec3::new(0.1, 0.2, -3.0),
            64,
            48,
        )
        .unwrap();
        assert_eq!(parse_camera(&camera_to_string(&cam)).unwrap(), cam);
    }
}
