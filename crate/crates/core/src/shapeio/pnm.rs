use crate::error::{Result, TsrError};

pub(super) enum Pixels {
    /// PBM: bit set = foreground, no thresholding.
    Bits(Vec<bool>),
    /// Gray levels rescaled to 0..=255.
    Gray(Vec<u8>),
}

pub(super) struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Pixels,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn uint(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(TsrError::CorruptFile(
                "expected a number in PNM data".into(),
            ));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| TsrError::CorruptFile("number out of range in PNM data".into()))
    }

    /// A single ASCII bit; P1 allows bits without separators.
    fn bit(&mut self) -> Result<bool> {
        self.skip_ws();
        match self.buf.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(false)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(true)
            }
            _ => Err(TsrError::CorruptFile("truncated or invalid P1 data".into())),
        }
    }

    fn rest(&self) -> &'a [u8] {
        &self.buf[self.pos.min(self.buf.len())..]
    }
}

fn scale(v: usize, maxval: usize) -> u8 {
    ((v.min(maxval) * 255 + maxval / 2) / maxval) as u8
}

pub(super) fn decode_pnm(bytes: &[u8]) -> Result<Raster> {
    let kind = bytes[1];
    if !matches!(kind, b'1' | b'2' | b'4' | b'5') {
        return Err(TsrError::UnsupportedFormat(format!(
            "PNM variant P{} (only P1, P2, P4, P5 are supported)",
            kind as char
        )));
    }
    let mut c = Cursor { buf: bytes, pos: 2 };
    let width = c.uint()?;
    let height = c.uint()?;
    if width == 0 || height == 0 {
        return Err(TsrError::CorruptFile("zero image dimension".into()));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| TsrError::CorruptFile("image dimensions overflow".into()))?;
    let pixels = match kind {
        b'1' => Pixels::Bits((0..n).map(|_| c.bit()).collect::<Result<_>>()?),
        b'4' => {
            // exactly one whitespace byte after the header
            c.pos += 1;
            let stride = width.div_ceil(8);
            let data = c.rest();
            if data.len() < stride * height {
                return Err(TsrError::CorruptFile("truncated P4 raster".into()));
            }
            let mut bits = Vec::with_capacity(n);
            for y in 0..height {
                let row = &data[y * stride..(y + 1) * stride];
                for x in 0..width {
                    bits.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
                }
            }
            Pixels::Bits(bits)
        }
        b'2' => {
            let maxval = c.uint()?;
            if maxval == 0 || maxval > 65535 {
                return Err(TsrError::CorruptFile(format!("bad PGM maxval {maxval}")));
            }
            let mut gray = Vec::with_capacity(n);
            for _ in 0..n {
                gray.push(scale(c.uint()?, maxval));
            }
            Pixels::Gray(gray)
        }
        _ => {
            let maxval = c.uint()?;
            if maxval == 0 || maxval > 65535 {
                return Err(TsrError::CorruptFile(format!("bad PGM maxval {maxval}")));
            }
            c.pos += 1;
            let data = c.rest();
            let wide = maxval > 255;
            let need = if wide { 2 * n } else { n };
            if data.len() < need {
                return Err(TsrError::CorruptFile("truncated P5 raster".into()));
            }
            let gray = if wide {
                data[..need]
                    .chunks_exact(2)
                    .map(|b| scale(u16::from_be_bytes([b[0], b[1]]) as usize, maxval))
                    .collect()
            } else {
                data[..n]
                    .iter()
                    .map(|&v| scale(v as usize, maxval))
                    .collect()
            };
            Pixels::Gray(gray)
        }
    };
    Ok(Raster {
        width,
        height,
        pixels,
    })
}

pub(super) fn decode_png(bytes: &[u8]) -> Result<Raster> {
    let corrupt = |e: png::DecodingError| TsrError::CorruptFile(format!("PNG: {e}"));
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let color = reader.info().color_type;
    if color != png::ColorType::Grayscale {
        return Err(TsrError::UnsupportedFormat(format!(
            "PNG color type {color:?} (only grayscale is supported)"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| TsrError::CorruptFile("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(corrupt)?;
    let (width, height) = (frame.width as usize, frame.height as usize);
    let stride = frame.line_size;
    let mut gray = Vec::with_capacity(width * height);
    for y in 0..height {
        gray.extend_from_slice(&buf[y * stride..y * stride + width]);
    }
    Ok(Raster {
        width,
        height,
        pixels: Pixels::Gray(gray),
    })
}
