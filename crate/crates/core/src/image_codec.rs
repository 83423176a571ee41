//! Matrices as 1088×1024 RGB images: set bits green, unset bits red,
//! vacant bits gray. This file format is the hand-off point for external
//! generators, which is why decoding snaps every pixel to the nearest
//! canonical color.

use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use image::{ImageFormat, ImageReader, RgbImage};
use thiserror::Error;

use crate::fsutil;
use crate::nprint::{BitRow, NprintMatrix, Trit, MATRIX_ROWS, ROW_BITS};

pub const WIDTH: u32 = ROW_BITS as u32;
pub const HEIGHT: u32 = MATRIX_ROWS as u32;

pub const GREEN: [u8; 3] = [0, 255, 0];
pub const RED: [u8; 3] = [255, 0, 0];
pub const GRAY: [u8; 3] = [128, 128, 128];

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image codec: {0}")]
    Codec(#[from] image::ImageError),
    #[error("image is {width}x{height}, expected {WIDTH}x{HEIGHT}")]
    Dimensions { width: u32, height: u32 },
    #[error("{0:?} is lossy; pass a lenient read option to accept it")]
    LossyFormat(ImageFormat),
}

#[derive(Debug, Clone, Copy)]
pub struct ReadOptions {
    /// Reject lossy formats such as JPEG.
    pub strict: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions { strict: true }
    }
}

pub fn trit_color(t: Trit) -> [u8; 3] {
    match t {
        Trit::Set => GREEN,
        Trit::Unset => RED,
        Trit::Vacant => GRAY,
    }
}

/// Nearest canonical color by Euclidean RGB distance; any tie is vacant.
pub fn nearest_trit(px: [u8; 3]) -> Trit {
    let d = |c: [u8; 3]| -> i32 {
        px.iter().zip(c).map(|(a, b)| (i32::from(*a) - i32::from(b)).pow(2)).sum()
    };
    let cands = [(d(GREEN), Trit::Set), (d(RED), Trit::Unset), (d(GRAY), Trit::Vacant)];
    let best = cands.iter().map(|c| c.0).min().expect("three candidates");
    let mut winners = cands.iter().filter(|c| c.0 == best);
    match (winners.next(), winners.next()) {
        (Some(w), None) => w.1,
        _ => Trit::Vacant,
    }
}

pub fn matrix_to_rgb(m: &NprintMatrix) -> RgbImage {
    let mut img = RgbImage::new(WIDTH, HEIGHT);
    for (y, row) in m.rows().iter().enumerate() {
        for (x, t) in row.trits().iter().enumerate() {
            img.put_pixel(x as u32, y as u32, image::Rgb(trit_color(*t)));
        }
    }
    img
}

pub fn rgb_to_matrix(img: &RgbImage) -> Result<NprintMatrix, ImageError> {
    if img.width() != WIDTH || img.height() != HEIGHT {
        return Err(ImageError::Dimensions { width: img.width(), height: img.height() });
    }
    let mut rows = Vec::with_capacity(MATRIX_ROWS);
    for y in 0..HEIGHT {
        let mut row = BitRow::padding();
        for x in 0..WIDTH {
            row.set(x as usize, nearest_trit(img.get_pixel(x, y).0));
        }
        rows.push(row);
    }
    Ok(NprintMatrix::from_full(rows, None).expect("exactly 1024 rows"))
}

/// PNG bytes of the matrix.
pub fn encode_png(m: &NprintMatrix) -> Result<Vec<u8>, ImageError> {
    let mut out = Cursor::new(Vec::new());
    matrix_to_rgb(m).write_to(&mut out, ImageFormat::Png)?;
    Ok(out.into_inner())
}

/// Write the matrix as a PNG, atomically.
pub fn matrix_to_image(m: &NprintMatrix, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let bytes = encode_png(m)?;
    fsutil::write_atomic(path.as_ref(), |f| {
        let mut w = BufWriter::new(f);
        w.write_all(&bytes)?;
        w.flush()
    })?;
    Ok(())
}

pub fn image_to_matrix(path: impl AsRef<Path>) -> Result<NprintMatrix, ImageError> {
    image_to_matrix_with(path, ReadOptions::default())
}

pub fn image_to_matrix_with(path: impl AsRef<Path>, opts: ReadOptions) -> Result<NprintMatrix, ImageError> {
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    decode_reader(reader, opts)
}

pub fn decode_image_bytes(bytes: &[u8], opts: ReadOptions) -> Result<NprintMatrix, ImageError> {
    let reader = ImageReader::new(Cursor::new(bytes)).with_guessed_format()?;
    decode_reader(reader, opts)
}

fn decode_reader<R: std::io::BufRead + std::io::Seek>(
    reader: ImageReader<R>,
    opts: ReadOptions,
) -> Result<NprintMatrix, ImageError> {
    if let Some(fmt) = reader.format() {
        if opts.strict && matches!(fmt, ImageFormat::Jpeg | ImageFormat::WebP | ImageFormat::Avif) {
            return Err(ImageError::LossyFormat(fmt));
        }
    }
    let img = reader.decode()?;
    if img.width() != WIDTH || img.height() != HEIGHT {
        return Err(ImageError::Dimensions { width: img.width(), height: img.height() });
    }
    rgb_to_matrix(&img.to_rgb8())
}
