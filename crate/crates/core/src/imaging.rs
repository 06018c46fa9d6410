//! Compressive reconstruction of images through their Haar wavelet coefficients.
//!
//! The transform is the orthonormal 2-D Haar wavelet. For each 2×2 block
//! `[a b; c d]` of the current approximation band it produces
//!
//! ```text
//! LL = (a + b + c + d)/2    H = (a + b − c − d)/2
//! V  = (a − b + c − d)/2    D = (a − b − c + d)/2
//! ```
//!
//! and recurses on `LL`. The flat coefficient vector holds the coarsest `LL`
//! band first, then the `H`, `V`, `D` bands of each level from coarsest to
//! finest, every band in row-major order.
//!
//! Reconstruction senses `y = Ac*` for the coefficient vector `c*` of an
//! image, runs a sparse solver for a fixed number of iterations, and scores
//! the synthesized estimate by PSNR against the original after rounding to
//! 8-bit pixels.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::ImageEncoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::BlockDictionary;
use crate::solvers::{Problem, SolverConfig, SolverKind, SolverRun};

pub const DEFAULT_LEVELS: usize = 6;
pub const PHANTOM_SIZE: usize = 64;

/// Grayscale image with real-valued pixels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        crate::error::check_len(pixels.len(), width * height)?;
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Pixels rounded and clamped to `0..=255`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// The image as it would be stored with 8 bits per pixel.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.to_bytes().into_iter().map(f64::from).collect(),
        }
    }

    /// Central crop whose sides are multiples of `2^levels`.
    pub fn center_crop(&self, levels: usize) -> Result<Self> {
        let unit = 1usize << levels;
        let (w, h) = (self.width / unit * unit, self.height / unit * unit);
        if w == 0 || h == 0 {
            return Err(Error::InvalidDimension(format!(
                "{}x{} image is smaller than 2^{levels}",
                self.width, self.height
            )));
        }
        let (x0, y0) = ((self.width - w) / 2, (self.height - h) / 2);
        let pixels = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| self.get(y0 + r, x0 + c))
            .collect();
        Self::new(w, h, pixels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveletCoeffs {
    pub levels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

fn check_divisible(width: usize, height: usize, levels: usize) -> Result<()> {
    let unit = 1usize.checked_shl(levels as u32).unwrap_or(0);
    if width == 0 || height == 0 || unit == 0 || width % unit != 0 || height % unit != 0 {
        return Err(Error::InvalidDimension(format!(
            "{width}x{height} is not divisible by 2^{levels}"
        )));
    }
    Ok(())
}

/// Row-major band of size `w × h`.
struct Band {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

pub fn haar_analysis(img: &GrayImage, levels: usize) -> Result<WaveletCoeffs> {
    check_divisible(img.width, img.height, levels)?;
    let mut approx = Band {
        w: img.width,
        h: img.height,
        data: img.pixels.clone(),
    };
    // details[l] = (H, V, D) at level l, finest first.
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (w, h) = (approx.w / 2, approx.h / 2);
        let mut bands: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(w * h));
        for r in 0..h {
            for c in 0..w {
                let at = |dr: usize, dc: usize| approx.data[(2 * r + dr) * approx.w + 2 * c + dc];
                let (a, b, cc, d) = (at(0, 0), at(0, 1), at(1, 0), at(1, 1));
                bands[0].push((a + b + cc + d) / 2.0);
                bands[1].push((a + b - cc - d) / 2.0);
                bands[2].push((a - b + cc - d) / 2.0);
                bands[3].push((a - b - cc + d) / 2.0);
            }
        }
        let [ll, hh, vv, dd] = bands;
        details.push([hh, vv, dd]);
        approx = Band { w, h, data: ll };
    }
    let mut data = approx.data;
    for level in details.into_iter().rev() {
        for band in level {
            data.extend(band);
        }
    }
    Ok(WaveletCoeffs {
        levels,
        width: img.width,
        height: img.height,
        data,
    })
}

pub fn haar_synthesis(coeffs: &WaveletCoeffs) -> Result<GrayImage> {
    let WaveletCoeffs {
        levels,
        width,
        height,
        ref data,
    } = *coeffs;
    check_divisible(width, height, levels)?;
    crate::error::check_len(data.len(), width * height)?;
    let (mut w, mut h) = (width >> levels, height >> levels);
    let mut approx = data[..w * h].to_vec();
    let mut offset = w * h;
    for _ in 0..levels {
        let size = w * h;
        let band = |i: usize| &data[offset + i * size..offset + (i + 1) * size];
        let (hh, vv, dd) = (band(0), band(1), band(2));
        let mut next = vec![0.0; 4 * size];
        let wide = 2 * w;
        for r in 0..h {
            for c in 0..w {
                let k = r * w + c;
                let (ll, x, y, z) = (approx[k], hh[k], vv[k], dd[k]);
                next[2 * r * wide + 2 * c] = (ll + x + y + z) / 2.0;
                next[2 * r * wide + 2 * c + 1] = (ll + x - y - z) / 2.0;
                next[(2 * r + 1) * wide + 2 * c] = (ll - x + y - z) / 2.0;
                next[(2 * r + 1) * wide + 2 * c + 1] = (ll - x - y + z) / 2.0;
            }
        }
        offset += 3 * size;
        approx = next;
        w *= 2;
        h *= 2;
    }
    GrayImage::new(width, height, approx)
}

/// `10·log₁₀(255²/MSE)`, or `+∞` for identical images.
pub fn psnr(orig: &GrayImage, recon: &GrayImage) -> Result<f64> {
    if orig.width != recon.width || orig.height != recon.height {
        return Err(Error::InvalidDimension(format!(
            "{}x{} vs {}x{}",
            orig.width, orig.height, recon.width, recon.height
        )));
    }
    let mse = orig
        .pixels
        .iter()
        .zip(&recon.pixels)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / orig.pixels.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// PSNR as written in CSV output: `inf` for exact reconstructions.
pub fn format_psnr(db: f64) -> String {
    if db.is_infinite() && db > 0.0 {
        "inf".to_string()
    } else {
        format!("{db:.6}")
    }
}

/// 64×64 test image: a smooth diagonal gradient behind nested ellipses of
/// constant intensity, rounded to integers.
pub fn phantom() -> GrayImage {
    phantom_sized(PHANTOM_SIZE)
}

pub fn phantom_sized(size: usize) -> GrayImage {
    // (center x, center y, semi-axis x, semi-axis y, rotation in degrees, added intensity)
    const ELLIPSES: [(f64, f64, f64, f64, f64, f64); 6] = [
        (0.0, 0.0, 0.72, 0.9, 0.0, 120.0),
        (0.0, -0.02, 0.64, 0.82, 0.0, -60.0),
        (0.24, 0.0, 0.12, 0.32, -18.0, -30.0),
        (-0.24, 0.0, 0.16, 0.4, 18.0, -30.0),
        (0.0, 0.38, 0.22, 0.18, 0.0, 50.0),
        (0.0, -0.55, 0.1, 0.08, 0.0, 70.0),
    ];
    let s = size as f64;
    let mut pixels = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            let x = 2.0 * (c as f64 + 0.5) / s - 1.0;
            let y = 1.0 - 2.0 * (r as f64 + 0.5) / s;
            let mut v = 20.0 + 12.0 * (x + 1.0) + 8.0 * (y + 1.0);
            for &(cx, cy, ax, ay, deg, gain) in &ELLIPSES {
                let (sin, cos) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - cx, y - cy);
                let (u, w) = (dx * cos + dy * sin, -dx * sin + dy * cos);
                if (u / ax).powi(2) + (w / ay).powi(2) <= 1.0 {
                    v += gain;
                }
            }
            pixels.push(v.round().clamp(0.0, 255.0));
        }
    }
    GrayImage {
        width: size,
        height: size,
        pixels,
    }
}

fn image_error(e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Format(other.to_string()),
    }
}

/// Reads any PNM file as 8-bit grayscale.
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let img = image::ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(image_error)?
        .to_luma8();
    let (w, h) = img.dimensions();
    GrayImage::new(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(f64::from).collect(),
    )
}

/// Writes binary PGM (P5) after rounding and clamping to `0..=255`.
pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let encoder = PnmEncoder::new(file).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    encoder
        .write_image(
            &img.to_bytes(),
            img.width as u32,
            img.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(image_error)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImagingConfig {
    pub levels: usize,
    pub solver: SolverKind,
    /// Defaults to `⌊m/3⌋`.
    pub sparsity: Option<usize>,
    /// Iteration counts at which PSNR is recorded; the run lasts until the
    /// largest of them.
    pub record_at: Vec<usize>,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        Self {
            levels: DEFAULT_LEVELS,
            solver: SolverKind::Tsaa,
            sparsity: None,
            record_at: (1..=10).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Synthesized image after the last recorded iteration.
    pub image: GrayImage,
    /// `(iteration, PSNR in dB)` at each requested iteration.
    pub psnr_trace: Vec<(usize, f64)>,
}

impl Reconstruction {
    pub fn psnr_at(&self, iteration: usize) -> Option<f64> {
        self.psnr_trace
            .iter()
            .find(|(k, _)| *k == iteration)
            .map(|(_, v)| *v)
    }

    /// `iteration,psnr_db` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("iteration,psnr_db\n");
        for (k, db) in &self.psnr_trace {
            out.push_str(&format!("{k},{}\n", format_psnr(*db)));
        }
        out
    }
}

/// Two seeded orthogonal blocks of size `pixels/2`, for images with
/// `pixels` pixels.
pub fn imaging_dictionary(seed: u64, pixels: usize) -> Result<BlockDictionary> {
    if pixels % 2 != 0 {
        return Err(Error::InvalidDimension(format!("{pixels} pixels cannot be split into two blocks")));
    }
    let seeds: Vec<u64> = (0..2)
        .map(|i| crate::seed::derive_seed(seed, crate::seed::stream::BLOCK_BASE + i))
        .collect();
    BlockDictionary::from_block_seeds(&seeds, pixels / 2)
}

/// Senses the wavelet coefficients of `img` with `dict` and reconstructs.
pub fn reconstruct_image(
    img: &GrayImage,
    dict: &BlockDictionary,
    cfg: &ImagingConfig,
) -> Result<Reconstruction> {
    let coeffs = haar_analysis(img, cfg.levels)?;
    if coeffs.data.len() != dict.n() {
        return Err(Error::InvalidDimension(format!(
            "{} coefficients but the dictionary has {} columns",
            coeffs.data.len(),
            dict.n()
        )));
    }
    let y = dict.apply(&coeffs.data)?;
    let k = cfg.sparsity.unwrap_or(dict.m() / 3);
    let mut record_at = cfg.record_at.clone();
    record_at.sort_unstable();
    record_at.dedup();
    let last = record_at.last().copied().unwrap_or(0);
    let solver_cfg = SolverConfig::new(k).fixed_budget(last);
    let mut run = SolverRun::new(cfg.solver, Problem::new(dict, &y), &solver_cfg)?;

    let render = |estimate: Vec<f64>| {
        haar_synthesis(&WaveletCoeffs {
            levels: cfg.levels,
            width: img.width,
            height: img.height,
            data: estimate,
        })
    };
    let mut image = render(run.estimate()?)?;
    let mut psnr_trace = Vec::with_capacity(record_at.len());
    for &target in &record_at {
        while run.iteration() < target {
            run.step()?;
        }
        image = render(run.estimate()?)?;
        psnr_trace.push((target, psnr(img, &image.quantized())?));
    }
    Ok(Reconstruction { image, psnr_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn random_image(seed: u64, w: usize, h: usize) -> GrayImage {
        let mut rng = rng_from_seed(seed);
        let pixels = (0..w * h).map(|_| rng.random_range(0.0..255.0)).collect();
        GrayImage::new(w, h, pixels).unwrap()
    }

    #[test]
    fn constant_block() {
        let c = haar_analysis(&GrayImage::filled(2, 2, 7.0), 1).unwrap();
        assert_eq!(c.data, vec![14.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn band_layout_on_4x4() {
        // Horizontal stripes: rows alternate 1, 0. Only the finest H band fires.
        let pixels: Vec<f64> = (0..16).map(|i| if (i / 4) % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let c = haar_analysis(&GrayImage::new(4, 4, pixels).unwrap(), 2).unwrap();
        // [LL2 | H2 V2 D2 | H1(4) V1(4) D1(4)]
        assert_eq!(c.data[0], 2.0);
        assert_eq!(&c.data[1..4], &[0.0, 0.0, 0.0]);
        assert_eq!(&c.data[4..8], &[1.0; 4]);
        assert!(c.data[8..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_checks() {
        assert!(haar_analysis(&GrayImage::filled(192, 174, 0.0), 2).is_err());
        assert!(haar_analysis(&GrayImage::filled(64, 64, 0.0), 7).is_err());
        let cropped = GrayImage::filled(192, 174, 1.0).center_crop(6).unwrap();
        assert_eq!((cropped.width, cropped.height), (192, 128));
    }

    #[test]
    fn round_trip_and_energy() {
        let img = random_image(3, 64, 64);
        for levels in 0..=6 {
            let c = haar_analysis(&img, levels).unwrap();
            let energy: f64 = dot(&c.data, &c.data);
            let pixel_energy: f64 = dot(&img.pixels, &img.pixels);
            assert!((energy - pixel_energy).abs() <= 1e-9 * pixel_energy);
            let back = haar_synthesis(&c).unwrap();
            let worst = back
                .pixels
                .iter()
                .zip(&img.pixels)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(worst <= 1e-9);
        }
    }

    #[test]
    fn inner_products_are_preserved() {
        for levels in 1..=6 {
            let u = random_image(10 + levels as u64, 64, 64);
            let v = random_image(20 + levels as u64, 64, 64);
            let lhs = dot(&haar_analysis(&u, levels).unwrap().data, &haar_analysis(&v, levels).unwrap().data);
            let rhs = dot(&u.pixels, &v.pixels);
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs());
        }
    }

    #[test]
    fn synthesis_basis_shapes() {
        let zero = WaveletCoeffs {
            levels: 3,
            width: 16,
            height: 8,
            data: vec![0.0; 128],
        };
        assert!(haar_synthesis(&zero).unwrap().pixels.iter().all(|v| *v == 0.0));
        let mut unit = zero.clone();
        unit.data[0] = 1.0;
        let img = haar_synthesis(&unit).unwrap();
        // Coarsest approximation cells are 8×8 with value 1/8.
        assert!((img.get(0, 0) - 0.125).abs() < 1e-15);
        assert!((img.get(7, 7) - 0.125).abs() < 1e-15);
        assert_eq!(img.get(0, 8), 0.0);
    }

    #[test]
    fn psnr_cases() {
        let a = GrayImage::filled(8, 8, 255.0);
        let b = GrayImage::filled(8, 8, 254.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let expected = 10.0 * (255.0f64 * 255.0).log10();
        assert!((psnr(&a, &b).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 48.1308).abs() < 1e-4);
        let c = random_image(1, 8, 8);
        assert_eq!(psnr(&a, &c).unwrap(), psnr(&c, &a).unwrap());
        assert!(psnr(&a, &GrayImage::filled(4, 4, 0.0)).is_err());
        assert_eq!(format_psnr(f64::INFINITY), "inf");
    }

    #[test]
    fn phantom_is_integral_and_in_range() {
        let p = phantom();
        assert_eq!((p.width, p.height), (64, 64));
        assert!(p.pixels.iter().all(|v| v.fract() == 0.0 && (0.0..=255.0).contains(v)));
        assert!(p.pixels.iter().any(|v| *v > 100.0));
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.pgm");
        let img = phantom_sized(16);
        write_pgm(&img, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..2], b"P5");
        assert_eq!(read_pgm(&path).unwrap(), img);
    }

    #[test]
    fn exactly_sparse_image_is_recovered() {
        // Four 8×8 flat quadrants: only the coarsest approximation band is nonzero.
        let mut c = WaveletCoeffs {
            levels: 3,
            width: 16,
            height: 16,
            data: vec![0.0; 256],
        };
        c.data[..4].copy_from_slice(&[800.0, 600.0, 400.0, 200.0]);
        let img = haar_synthesis(&c).unwrap();
        let dict = imaging_dictionary(2, 256).unwrap();
        let cfg = ImagingConfig {
            levels: 3,
            sparsity: Some(4),
            record_at: vec![1, 5, 20],
            ..ImagingConfig::default()
        };
        let rec = reconstruct_image(&img, &dict, &cfg).unwrap();
        assert_eq!(rec.psnr_trace.iter().map(|t| t.0).collect::<Vec<_>>(), vec![1, 5, 20]);
        assert_eq!(rec.psnr_at(20), Some(f64::INFINITY));
        assert!(rec.trace_csv().ends_with("20,inf\n"));
    }
}
