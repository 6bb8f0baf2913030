//! Reference detector written straight from the method description, std
//! only. It shares nothing with the library: its own netpbm reader, luma,
//! blur, motion vote and quadrant vote.

use std::path::Path;

pub const W: usize = 160;
pub const H: usize = 120;

/// Reads a binary P6 (or P5) file and returns its grayscale pixels.
pub fn load_gray(path: &Path) -> Vec<u8> {
    let bytes = std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        let c = bytes[i];
        if c == b'#' {
            while bytes[i] != b'\n' {
                i += 1;
            }
        } else if c.is_ascii_whitespace() {
            i += 1;
        } else {
            let start = i;
            while !bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            fields.push(String::from_utf8(bytes[start..i].to_vec()).unwrap());
        }
    }
    let pixels = &bytes[i + 1..];
    let (w, h): (usize, usize) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    assert_eq!((w, h, fields[3].as_str()), (W, H, "255"), "{}", path.display());
    match fields[0].as_str() {
        "P5" => pixels[..W * H].to_vec(),
        "P6" => pixels[..W * H * 3]
            .chunks(3)
            .map(|p| {
                let v = 299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32;
                ((v + 500) / 1000) as u8
            })
            .collect(),
        other => panic!("unsupported magic {other}"),
    }
}

/// 5x5 Gaussian, sigma 1, edges replicated, rounded to nearest.
pub fn blur(src: &[u8]) -> Vec<u8> {
    let mut k = [[0.0f64; 5]; 5];
    let mut total = 0.0;
    for (j, row) in k.iter_mut().enumerate() {
        for (i, w) in row.iter_mut().enumerate() {
            let (dx, dy) = (i as f64 - 2.0, j as f64 - 2.0);
            *w = (-(dx * dx + dy * dy) / 2.0).exp();
            total += *w;
        }
    }
    for w in k.iter_mut().flatten() {
        *w /= total;
    }

    let mut out = vec![0u8; W * H];
    for y in 0..H {
        for x in 0..W {
            let mut acc = 0.0;
            for (j, row) in k.iter().enumerate() {
                let sy = (y as i64 + j as i64 - 2).clamp(0, H as i64 - 1) as usize;
                for (i, w) in row.iter().enumerate() {
                    let sx = (x as i64 + i as i64 - 2).clamp(0, W as i64 - 1) as usize;
                    acc += src[sy * W + sx] as f64 * w;
                }
            }
            out[y * W + x] = acc.round().clamp(0.0, 255.0) as u8;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub a: bool,
    pub b: bool,
    /// Top-left, top-right, bottom-left, bottom-right.
    pub flags: [bool; 4],
}

/// Runs both votes over frames in order. The first frame only seeds the
/// background; a frame that moves keeps the old background.
pub fn detect_all(frames: &[Vec<u8>]) -> Vec<Verdict> {
    let mut background: Option<Vec<u8>> = None;
    let mut out = Vec::new();
    for f in frames {
        let a = match &background {
            None => false,
            Some(bg) => {
                let active = f
                    .iter()
                    .zip(bg)
                    .filter(|(p, q)| (**p as i32 - **q as i32).abs() > 25)
                    .count();
                // 5% of 19200 pixels.
                active >= 960
            }
        };
        if !a {
            background = Some(f.clone());
        }

        let mut sums = [0u64; 4];
        for y in 0..H {
            for x in 0..W {
                let q = (x >= W / 2) as usize + 2 * (y >= H / 2) as usize;
                sums[q] += f[y * W + x] as u64;
            }
        }
        let total: u64 = sums.iter().sum();
        let mut flags = [false; 4];
        // Mean at least 1.0, and quadrant mean at least 1.2x the frame mean:
        // sum_q / 4800 >= 1.2 * total / 19200, i.e. 10 * sum_q >= 3 * total.
        if total >= (W * H) as u64 {
            for q in 0..4 {
                flags[q] = 10 * sums[q] >= 3 * total;
            }
        }
        let b = flags.iter().any(|&v| v);
        out.push(Verdict { a, b, flags });
    }
    out
}

/// `(file, positive)` rows of a manifest.csv.
pub fn read_manifest(path: &Path) -> Vec<(String, bool)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("frame,label"));
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut cols = l.split(',');
            let name = cols.next().unwrap().to_string();
            let positive = match cols.next().unwrap() {
                "pos" => true,
                "neg" => false,
                other => panic!("label {other}"),
            };
            (name, positive)
        })
        .collect()
}

/// `[tp, fp, fn, tn]`.
pub fn confusion(predicted: &[bool], actual: &[bool]) -> [u64; 4] {
    let mut m = [0u64; 4];
    for (&p, &t) in predicted.iter().zip(actual) {
        let cell = match (p, t) {
            (true, true) => 0,
            (true, false) => 1,
            (false, true) => 2,
            (false, false) => 3,
        };
        m[cell] += 1;
    }
    m
}

/// Loads, blurs and scores a whole manifest; returns the verdicts and
/// the ground truth.
pub fn run_manifest(manifest: &Path) -> (Vec<Verdict>, Vec<bool>) {
    let dir = manifest.parent().unwrap();
    let rows = read_manifest(manifest);
    let frames: Vec<Vec<u8>> = rows.iter().map(|(n, _)| blur(&load_gray(&dir.join(n)))).collect();
    (detect_all(&frames), rows.iter().map(|r| r.1).collect())
}
