//! Indexed-color PNG + JSON legend encoding of partition maps.
//! Palette index 0 is unoccupied, 1 is unassigned, 2.. are materials in legend order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PartitionError, PartitionMap, UNASSIGNED, UNOCCUPIED};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionLegend {
    pub width: usize,
    pub height: usize,
    pub unoccupied: u8,
    pub unassigned: u8,
    /// Material id for palette index `2 + k`.
    pub materials: Vec<String>,
}

const MAX_MATERIALS: usize = 254;

/// Palette entry for an index. Material entries walk a scrambled 7x7x7 color
/// cube, skipping the two reserved colors, so all 256 entries are distinct.
pub fn palette_color(index: u8) -> [u8; 3] {
    const LEVELS: [u8; 7] = [0, 42, 85, 127, 170, 212, 255];
    const BLACK: usize = 0;
    const MAGENTA: usize = 6 * 49 + 6;
    match index {
        0 => [0, 0, 0],
        1 => [255, 0, 255],
        k => {
            let m = (0..)
                .map(|j: usize| (j * 149 + 17) % 343)
                .filter(|&m| m != BLACK && m != MAGENTA)
                .nth((k - 2) as usize)
                .expect("cycle covers 341 colors");
            [LEVELS[m / 49], LEVELS[(m / 7) % 7], LEVELS[m % 7]]
        }
    }
}

/// Writes `<stem>.png` (palette) and `<stem>.json` (legend) into `dir`.
pub fn write_partition(part: &PartitionMap, dir: &Path, stem: &str) -> Result<(), PartitionError> {
    if part.materials.len() > MAX_MATERIALS {
        return Err(PartitionError::Format(format!(
            "{} materials exceed the {MAX_MATERIALS}-entry palette",
            part.materials.len()
        )));
    }
    std::fs::create_dir_all(dir)?;
    let entries = 2 + part.materials.len();
    let palette: Vec<u8> = (0..entries).flat_map(|k| palette_color(k as u8)).collect();
    let indices: Vec<u8> = part
        .cells
        .iter()
        .map(|&c| match c {
            UNOCCUPIED => 0,
            UNASSIGNED => 1,
            k => (k + 2) as u8,
        })
        .collect();
    let mut bytes = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut bytes, part.width as u32, part.height as u32);
        enc.set_color(png::ColorType::Indexed);
        enc.set_depth(png::BitDepth::Eight);
        enc.set_palette(palette);
        let mut w = enc.write_header().map_err(|e| PartitionError::Format(e.to_string()))?;
        w.write_image_data(&indices).map_err(|e| PartitionError::Format(e.to_string()))?;
    }
    std::fs::write(dir.join(format!("{stem}.png")), bytes)?;
    let legend = PartitionLegend {
        width: part.width,
        height: part.height,
        unoccupied: 0,
        unassigned: 1,
        materials: part.materials.clone(),
    };
    std::fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&legend).expect("legend serializes"),
    )?;
    Ok(())
}

/// Reads a partition written by [`write_partition`]. Palette-index PNGs are read
/// directly; RGB(A) PNGs (e.g. after editing in an image tool) are mapped back
/// through the palette colors.
pub fn read_partition(dir: &Path, stem: &str) -> Result<PartitionMap, PartitionError> {
    let legend: PartitionLegend = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.json")))?)
        .map_err(|e| PartitionError::Format(e.to_string()))?;
    let file = std::fs::File::open(dir.join(format!("{stem}.png")))?;
    let mut dec = png::Decoder::new(std::io::BufReader::new(file));
    dec.set_transformations(png::Transformations::IDENTITY);
    let mut reader = dec.read_info().map_err(|e| PartitionError::Format(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().expect("image fits in memory")];
    let info = reader.next_frame(&mut buf).map_err(|e| PartitionError::Format(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    if (w, h) != (legend.width, legend.height) {
        return Err(PartitionError::ResolutionMismatch {
            expected: (legend.width, legend.height),
            got: (w, h),
        });
    }
    if info.bit_depth != png::BitDepth::Eight {
        return Err(PartitionError::Format(format!("unsupported bit depth {:?}", info.bit_depth)));
    }
    let entries = 2 + legend.materials.len();
    let indices: Vec<u8> = match info.color_type {
        png::ColorType::Indexed => buf[..w * h].to_vec(),
        png::ColorType::Rgb | png::ColorType::Rgba => {
            let stride = info.color_type.samples();
            let colors: Vec<[u8; 3]> = (0..entries).map(|k| palette_color(k as u8)).collect();
            let mut out = Vec::with_capacity(w * h);
            for px in buf[..w * h * stride].chunks(stride) {
                let rgb = [px[0], px[1], px[2]];
                let k = colors
                    .iter()
                    .position(|c| *c == rgb)
                    .ok_or_else(|| PartitionError::Format(format!("color {rgb:?} is not in the palette")))?;
                out.push(k as u8);
            }
            out
        }
        other => return Err(PartitionError::Format(format!("unsupported color type {other:?}"))),
    };
    let cells = indices
        .into_iter()
        .map(|i| match i as usize {
            0 => Ok(UNOCCUPIED),
            1 => Ok(UNASSIGNED),
            k if k < entries => Ok((k - 2) as u32),
            k => Err(PartitionError::Format(format!("palette index {k} has no legend entry"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PartitionMap {
        width: w,
        height: h,
        cells,
        materials: legend.materials,
    })
}
