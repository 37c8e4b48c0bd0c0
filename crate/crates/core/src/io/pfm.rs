use std::path::Path;

use super::FormatError;
use crate::camera::DepthMap;

/// Parses a grayscale PFM. Rows are stored bottom-to-top; the sign of the
/// scale selects endianness (negative = little-endian).
pub fn decode_pfm(bytes: &[u8]) -> Result<DepthMap, FormatError> {
    let mut pos = 0;
    let mut token = || -> Result<&str, FormatError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(FormatError::MalformedHeader("truncated PFM header".into()));
        }
        std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| FormatError::MalformedHeader("non-ASCII PFM header".into()))
    };
    match token()? {
        "Pf" => {}
        "PF" => return Err(FormatError::WrongChannelCount),
        other => return Err(FormatError::MalformedHeader(format!("bad magic `{other}`"))),
    }
    let dim = |s: &str| -> Result<usize, FormatError> {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| FormatError::MalformedHeader(format!("bad dimension `{s}`")))
    };
    let width = dim(token()?)?;
    let height = dim(token()?)?;
    let scale_tok = token()?;
    let scale: f64 = scale_tok
        .parse()
        .map_err(|_| FormatError::MalformedHeader(format!("bad scale `{scale_tok}`")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(FormatError::MalformedHeader(
            "scale must be non-zero".into(),
        ));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(FormatError::MalformedHeader("missing raster".into()));
    }
    let data = &bytes[pos + 1..];
    let n = width * height;
    if data.len() != n * 4 {
        return Err(FormatError::CountMismatch {
            expected: n,
            found: data.len() / 4,
        });
    }
    let little = scale < 0.0;
    let mut values = vec![0.0; n];
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let b: [u8; 4] = chunk.try_into().unwrap();
        let v = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, u) = (k / width, k % width);
        let v_img = height - 1 - file_row;
        values[v_img * width + u] = v as f64;
    }
    Ok(DepthMap::new(width, height, values))
}

/// Little-endian grayscale PFM (scale `-1.0`).
pub fn encode_pfm(depth: &DepthMap) -> Vec<u8> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for file_row in 0..h {
        let v = h - 1 - file_row;
        for u in 0..w {
            out.extend_from_slice(&(depth.get(u, v) as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<DepthMap, FormatError> {
    decode_pfm(&std::fs::read(path)?)
}

pub fn write_pfm(depth: &DepthMap, path: impl AsRef<Path>) -> Result<(), FormatError> {
    std::fs::write(path, encode_pfm(depth))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_round_trip() {
        let d = DepthMap::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let bytes = encode_pfm(&d);
        assert!(bytes.starts_with(b"Pf\n2 2\n-1.0\n"));
        // Bottom row (3, 4) is stored first.
        assert_eq!(&bytes[12..16], &3.0f32.to_le_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap(), d);
    }

    #[test]
    fn non_positive_is_invalid() {
        let d = DepthMap::new(3, 1, vec![0.0, -1.0, 2.0]);
        let back = decode_pfm(&encode_pfm(&d)).unwrap();
        assert_eq!(back.valid_mask(), vec![false, false, true]);
        let nan = DepthMap::new(1, 1, vec![f64::NAN]);
        assert_eq!(decode_pfm(&encode_pfm(&nan)).unwrap().valid_count(), 0);
    }

    #[test]
    fn big_endian_is_honoured() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&5.0f32.to_be_bytes());
        bytes.extend_from_slice(&6.0f32.to_be_bytes());
        assert_eq!(decode_pfm(&bytes).unwrap().values(), &[5.0, 6.0]);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(
            decode_pfm(b"PF\n1 1\n-1.0\n\0\0\0\0"),
            Err(FormatError::WrongChannelCount)
        ));
        assert!(matches!(
            decode_pfm(b"P5\n1 1\n-1.0\n"),
            Err(FormatError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pfm(b"Pf\n0 1\n-1.0\n"),
            Err(FormatError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pfm(b"Pf\n1 1\n0\n\0\0\0\0"),
            Err(FormatError::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pfm(b"Pf\n2 1\n-1.0\n\0\0\0\0"),
            Err(FormatError::CountMismatch { .. })
        ));
    }
}
