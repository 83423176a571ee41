//! A matrix as a 1088x1024 PNG: green = 1, red = 0, gray = vacant.

use image::{ImageFormat, Rgb};
use nprint_synth::corpus;
use nprint_synth::image_codec::{self, ReadOptions};
use nprint_synth::nprint;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = nprint::encode_flow(&corpus::reference_flow())?;
    let path = std::env::temp_dir().join("nprint-reference.png");
    image_codec::matrix_to_image(&m, &path)?;
    let back = image_codec::image_to_matrix(&path)?;
    println!("wrote {} ({} bytes); lossless: {}", path.display(), std::fs::metadata(&path)?.len(), back.rows() == m.rows());

    // Slightly off colors snap to the nearest trit color.
    let mut img = image_codec::matrix_to_rgb(&m);
    for px in img.pixels_mut() {
        let Rgb([r, g, b]) = *px;
        *px = Rgb([r.saturating_sub(20), g.saturating_sub(20), b.saturating_add(10)]);
    }
    let mut png = std::io::Cursor::new(Vec::new());
    img.write_to(&mut png, ImageFormat::Png)?;
    let snapped = image_codec::decode_image_bytes(png.get_ref(), ReadOptions::default())?;
    println!("tinted PNG snaps back exactly: {}", snapped.rows() == m.rows());

    // JPEG is lossy, so strict reads refuse it.
    let mut jpg = std::io::Cursor::new(Vec::new());
    img.write_to(&mut jpg, ImageFormat::Jpeg)?;
    match image_codec::decode_image_bytes(jpg.get_ref(), ReadOptions::default()) {
        Ok(_) => println!("strict JPEG read unexpectedly succeeded"),
        Err(e) => println!("strict JPEG read: {e}"),
    }
    let lenient = image_codec::decode_image_bytes(jpg.get_ref(), ReadOptions { strict: false });
    println!("lenient JPEG read: {}", if lenient.is_ok() { "ok (approximate)" } else { "failed" });
    Ok(())
}
