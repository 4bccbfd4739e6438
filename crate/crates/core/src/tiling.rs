//! Atlas grid planning and partitioning of a rendered atlas into frames.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::math::ClipRemap;

pub const DEFAULT_MAX_ATLAS_DIM: u32 = 16384;

/// Row-major grid of `cols x rows` tiles, scene `s` at row `s / cols`,
/// column `s % cols`, row 0 at the top of the atlas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLayout {
    pub scene_count: usize,
    pub cols: u32,
    pub rows: u32,
    pub tile_width: u32,
    pub tile_height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub fn intersects(&self, o: &PixelRect) -> bool {
        self.x0 < o.x0 + o.width && o.x0 < self.x0 + self.width && self.y0 < o.y0 + o.height && o.y0 < self.y0 + self.height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub row: u32,
    pub col: u32,
    pub rect: PixelRect,
    pub remap: ClipRemap,
}

/// Smallest `c` with `c * c >= n`.
fn ceil_sqrt(n: u64) -> u64 {
    let mut c = (n as f64).sqrt() as u64;
    while c * c < n {
        c += 1;
    }
    while c > 0 && (c - 1) * (c - 1) >= n {
        c -= 1;
    }
    c
}

pub fn plan_layout(scenes: usize, width: u32, height: u32, max_atlas_dim: u32) -> Result<TileLayout> {
    if scenes < 1 {
        return Err(Error::InvalidSpec("scene_count must be ≥ 1".into()));
    }
    if width < 1 || height < 1 {
        return Err(Error::InvalidSpec(format!("tile size {width}x{height} must be at least 1x1")));
    }
    let cols = ceil_sqrt(scenes as u64);
    let rows = (scenes as u64).div_ceil(cols);
    let (aw, ah) = (cols * width as u64, rows * height as u64);
    if aw > max_atlas_dim as u64 || ah > max_atlas_dim as u64 {
        return Err(Error::AtlasTooLarge {
            width: aw,
            height: ah,
            max: max_atlas_dim,
        });
    }
    Ok(TileLayout {
        scene_count: scenes,
        cols: cols as u32,
        rows: rows as u32,
        tile_width: width,
        tile_height: height,
    })
}

impl TileLayout {
    pub fn new(scenes: usize, width: u32, height: u32) -> Result<Self> {
        plan_layout(scenes, width, height, DEFAULT_MAX_ATLAS_DIM)
    }

    pub fn atlas_width(&self) -> u32 {
        self.cols * self.tile_width
    }

    pub fn atlas_height(&self) -> u32 {
        self.rows * self.tile_height
    }

    /// Grid cells with no scene assigned.
    pub fn blank_tiles(&self) -> usize {
        (self.rows * self.cols) as usize - self.scene_count
    }

    pub fn tile(&self, scene: usize) -> Result<Tile> {
        if scene >= self.scene_count {
            return Err(Error::SceneOutOfRange {
                index: scene,
                count: self.scene_count,
            });
        }
        Ok(self.tile_unchecked(scene))
    }

    pub(crate) fn tile_unchecked(&self, scene: usize) -> Tile {
        let row = scene as u32 / self.cols;
        let col = scene as u32 % self.cols;
        Tile {
            row,
            col,
            rect: PixelRect {
                x0: col * self.tile_width,
                y0: row * self.tile_height,
                width: self.tile_width,
                height: self.tile_height,
            },
            remap: ClipRemap::for_tile(self.rows, self.cols, row, col),
        }
    }

    pub fn frame_bytes(&self) -> usize {
        self.tile_width as usize * self.tile_height as usize * 4
    }
}

pub fn tile_rect(layout: &TileLayout, scene: usize) -> Result<(PixelRect, ClipRemap)> {
    layout.tile(scene).map(|t| (t.rect, t.remap))
}

/// RGBA8 image, top-left origin, rows contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbaImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RgbaImage {
    pub fn filled(width: u32, height: u32, rgba: [u8; 4]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 4);
        for _ in 0..n {
            pixels.extend_from_slice(&rgba);
        }
        RgbaImage { width, height, pixels }
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        self.pixels[i..i + 4].try_into().unwrap()
    }
}

/// `S x H x W x 4` RGBA8 frames, top-left origin, frame-major then rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBatch {
    scenes: usize,
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl FrameBatch {
    pub fn new(scenes: usize, width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let expected = scenes * width as usize * height as usize * 4;
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                field: "frame batch".into(),
                expected: vec![scenes, height as usize, width as usize, 4],
                actual: vec![data.len()],
            });
        }
        Ok(FrameBatch {
            scenes,
            width,
            height,
            data,
        })
    }

    pub fn zeroed(scenes: usize, width: u32, height: u32) -> Self {
        FrameBatch {
            scenes,
            width,
            height,
            data: vec![0; scenes * width as usize * height as usize * 4],
        }
    }

    pub fn scenes(&self) -> usize {
        self.scenes
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    /// `[S, H, W, 4]`.
    pub fn shape(&self) -> [usize; 4] {
        [self.scenes, self.height as usize, self.width as usize, 4]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn as_bytes_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.data
    }

    pub fn frame_len(&self) -> usize {
        self.width as usize * self.height as usize * 4
    }

    pub fn frame(&self, scene: usize) -> &[u8] {
        let n = self.frame_len();
        &self.data[scene * n..(scene + 1) * n]
    }

    pub fn frame_mut(&mut self, scene: usize) -> &mut [u8] {
        let n = self.frame_len();
        &mut self.data[scene * n..(scene + 1) * n]
    }

    pub fn frame_image(&self, scene: usize) -> RgbaImage {
        RgbaImage {
            width: self.width,
            height: self.height,
            pixels: self.frame(scene).to_vec(),
        }
    }

    pub fn pixel(&self, scene: usize, x: u32, y: u32) -> [u8; 4] {
        let i = (y as usize * self.width as usize + x as usize) * 4;
        self.frame(scene)[i..i + 4].try_into().unwrap()
    }

    /// SHA-256 over each frame's own SHA-256, in scene order. Independent of
    /// how the scenes were sharded across renderers.
    pub fn checksum(&self) -> String {
        combine_frame_digests((0..self.scenes).map(|s| frame_digest(self.frame(s))))
    }

    pub fn frame_checksums(&self) -> Vec<String> {
        (0..self.scenes).map(|s| to_hex(&frame_digest(self.frame(s)))).collect()
    }

    /// Binary PPM (P6) of one frame; alpha is dropped.
    pub fn to_ppm(&self, scene: usize) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.width as usize * self.height as usize * 3);
        for px in self.frame(scene).chunks_exact(4) {
            out.extend_from_slice(&px[..3]);
        }
        out
    }

    /// Writes `frame_<s>.ppm` for every scene into `dir`.
    pub fn write_ppm_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for s in 0..self.scenes {
            let path = dir.join(format!("frame_{s}.ppm"));
            let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            f.write_all(&self.to_ppm(s)).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

pub(crate) fn frame_digest(frame: &[u8]) -> [u8; 32] {
    Sha256::digest(frame).into()
}

pub(crate) fn combine_frame_digests(digests: impl IntoIterator<Item = [u8; 32]>) -> String {
    let mut h = Sha256::new();
    for d in digests {
        h.update(d);
    }
    to_hex(&h.finalize())
}

pub(crate) fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn from_hex(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, chunk) in s.as_bytes().chunks(2).enumerate() {
        out[i] = u8::from_str_radix(std::str::from_utf8(chunk).ok()?, 16).ok()?;
    }
    Some(out)
}

/// Parses a binary P6 PPM with maxval 255 into `(width, height, rgb)`.
pub fn parse_ppm(bytes: &[u8]) -> Result<(u32, u32, Vec<u8>)> {
    let bad = |why: &str| Error::Config(format!("ppm: {why}"));
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ascii"))?);
    }
    if fields[0] != "P6" {
        return Err(bad("not a P6 file"));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| bad("bad header number"));
    let (w, h, max) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if max != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let data = &bytes[pos + 1..];
    let n = w as usize * h as usize * 3;
    if data.len() != n {
        return Err(bad("pixel data length mismatch"));
    }
    Ok((w, h, data.to_vec()))
}

/// Splits an atlas into per-scene frames; blank tiles are dropped.
pub fn partition_atlas(atlas: &RgbaImage, layout: &TileLayout) -> Result<FrameBatch> {
    let mut frames = FrameBatch::zeroed(layout.scene_count, layout.tile_width, layout.tile_height);
    partition_into(atlas, layout, &mut frames)?;
    Ok(frames)
}

pub(crate) fn partition_into(atlas: &RgbaImage, layout: &TileLayout, frames: &mut FrameBatch) -> Result<()> {
    check_atlas(atlas, layout)?;
    let row_bytes = layout.tile_width as usize * 4;
    let stride = atlas.width as usize * 4;
    for s in 0..layout.scene_count {
        let rect = layout.tile_unchecked(s).rect;
        let frame = frames.frame_mut(s);
        for y in 0..layout.tile_height as usize {
            let src = (rect.y0 as usize + y) * stride + rect.x0 as usize * 4;
            frame[y * row_bytes..(y + 1) * row_bytes].copy_from_slice(&atlas.pixels[src..src + row_bytes]);
        }
    }
    Ok(())
}

fn check_atlas(atlas: &RgbaImage, layout: &TileLayout) -> Result<()> {
    if atlas.width != layout.atlas_width()
        || atlas.height != layout.atlas_height()
        || atlas.pixels.len() != atlas.width as usize * atlas.height as usize * 4
    {
        return Err(Error::DimensionMismatch {
            expected_w: layout.atlas_width(),
            expected_h: layout.atlas_height(),
            actual_w: atlas.width,
            actual_h: atlas.height,
        });
    }
    Ok(())
}

/// Writes each frame back at its tile rectangle; other pixels are untouched.
pub fn stitch_into(frames: &FrameBatch, layout: &TileLayout, atlas: &mut RgbaImage) -> Result<()> {
    check_atlas(atlas, layout)?;
    if frames.scenes() != layout.scene_count
        || frames.width() != layout.tile_width
        || frames.height() != layout.tile_height
    {
        return Err(Error::LayoutMismatch {
            layout: layout.scene_count,
            state: frames.scenes(),
        });
    }
    let row_bytes = layout.tile_width as usize * 4;
    let stride = atlas.width as usize * 4;
    for s in 0..layout.scene_count {
        let rect = layout.tile_unchecked(s).rect;
        let frame = frames.frame(s);
        for y in 0..layout.tile_height as usize {
            let dst = (rect.y0 as usize + y) * stride + rect.x0 as usize * 4;
            atlas.pixels[dst..dst + row_bytes].copy_from_slice(&frame[y * row_bytes..(y + 1) * row_bytes]);
        }
    }
    Ok(())
}

/// Assembles an atlas from frames, filling blank tiles with `background`.
pub fn stitch(frames: &FrameBatch, layout: &TileLayout, background: [u8; 4]) -> Result<RgbaImage> {
    let mut atlas = RgbaImage::filled(layout.atlas_width(), layout.atlas_height(), background);
    stitch_into(frames, layout, &mut atlas)?;
    Ok(atlas)
}
