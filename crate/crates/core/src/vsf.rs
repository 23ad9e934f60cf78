//! Binary feature-stream format (`.vsf`).
//!
//! ```text
//! header := "VSF1" | version u16 | d u32 | P_h u16 | P_w u16 | frame_count u64
//! record := timestamp f64 | P_h * P_w * d x f32   (patch-major)
//! ```
//!
//! All integers and floats are little-endian. A `frame_count` of zero means
//! the length is unknown (live stream). The record encoding is shared with
//! the cold tier file.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::frame::{Dims, FrameFeature};

pub const STREAM_MAGIC: [u8; 4] = *b"VSF1";
pub const STREAM_VERSION: u16 = 1;
pub const STREAM_HEADER_LEN: usize = 4 + 2 + 4 + 2 + 2 + 8;

/// Decoded `.vsf` header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub dims: Dims,
    /// `None` when the writer did not know the length up front.
    pub frame_count: Option<u64>,
}

/// Size of one encoded frame record.
pub fn record_len(dims: &Dims) -> usize {
    8 + dims.frame_bytes()
}

/// Appends the wire encoding of `frame` to `buf`.
pub fn encode_record(frame: &FrameFeature, buf: &mut Vec<u8>) {
    buf.reserve(record_len(&frame.dims()));
    buf.extend_from_slice(&frame.timestamp().to_le_bytes());
    for v in frame.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

/// Decodes one record of exactly `record_len(dims)` bytes.
pub fn decode_record(bytes: &[u8], frame_index: u64, dims: Dims) -> Result<FrameFeature> {
    if bytes.len() != record_len(&dims) {
        return Err(Error::Truncated("frame record"));
    }
    let (ts, body) = bytes.split_at(8);
    let timestamp = f64::from_le_bytes(ts.try_into().expect("8 bytes"));
    let data: Vec<f32> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FrameFeature::new(frame_index, timestamp, dims, data)
}

fn encode_header(header: &StreamHeader, magic: [u8; 4]) -> Result<Vec<u8>> {
    let dims = header.dims;
    dims.validate()?;
    let d = u32::try_from(dims.dim).map_err(|_| Error::InvalidConfig("d exceeds u32".into()))?;
    let ph = u16::try_from(dims.patch_rows)
        .map_err(|_| Error::InvalidConfig("P_h exceeds u16".into()))?;
    let pw = u16::try_from(dims.patch_cols)
        .map_err(|_| Error::InvalidConfig("P_w exceeds u16".into()))?;
    let mut out = Vec::with_capacity(STREAM_HEADER_LEN);
    out.extend_from_slice(&magic);
    out.extend_from_slice(&STREAM_VERSION.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&ph.to_le_bytes());
    out.extend_from_slice(&pw.to_le_bytes());
    out.extend_from_slice(&header.frame_count.unwrap_or(0).to_le_bytes());
    Ok(out)
}

/// Reads until `buf` is full or EOF, returning the number of bytes read.
fn read_up_to<R: Read>(reader: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Parses a stream header, leaving `source` at the first frame record.
pub fn read_stream_header<R: Read>(source: &mut R) -> Result<StreamHeader> {
    let mut magic = [0u8; 4];
    let n = read_up_to(source, &mut magic)?;
    if n < 4 {
        return Err(Error::Truncated("stream magic"));
    }
    if magic != STREAM_MAGIC {
        return Err(Error::BadMagic {
            expected: STREAM_MAGIC,
            found: magic.to_vec(),
        });
    }
    let mut rest = [0u8; STREAM_HEADER_LEN - 4];
    if read_up_to(source, &mut rest)? < rest.len() {
        return Err(Error::Truncated("stream header"));
    }
    let version = u16::from_le_bytes([rest[0], rest[1]]);
    if version != STREAM_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let d = u32::from_le_bytes(rest[2..6].try_into().unwrap()) as usize;
    let ph = u16::from_le_bytes([rest[6], rest[7]]) as usize;
    let pw = u16::from_le_bytes([rest[8], rest[9]]) as usize;
    let count = u64::from_le_bytes(rest[10..18].try_into().unwrap());
    let dims = Dims::new(d, ph, pw)?;
    Ok(StreamHeader {
        dims,
        frame_count: (count != 0).then_some(count),
    })
}

/// Sequential `.vsf` decoder. Assigns frame indices 0, 1, 2, ...
pub struct StreamReader<R> {
    inner: R,
    header: StreamHeader,
    frames_read: u64,
    buf: Vec<u8>,
    done: bool,
}

impl<R: Read> StreamReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let header = read_stream_header(&mut inner)?;
        Ok(Self {
            buf: vec![0; record_len(&header.dims)],
            inner,
            header,
            frames_read: 0,
            done: false,
        })
    }

    pub fn header(&self) -> StreamHeader {
        self.header
    }

    pub fn dims(&self) -> Dims {
        self.header.dims
    }

    /// Next frame, or `None` at a clean end of stream.
    pub fn read_frame(&mut self) -> Result<Option<FrameFeature>> {
        if self.done {
            return Ok(None);
        }
        if let Some(declared) = self.header.frame_count {
            if self.frames_read == declared {
                self.done = true;
                return Ok(None);
            }
        }
        let n = read_up_to(&mut self.inner, &mut self.buf)?;
        if n == 0 {
            self.done = true;
            if self.header.frame_count.is_some() {
                return Err(Error::Truncated("declared frame count"));
            }
            return Ok(None);
        }
        if n < self.buf.len() {
            self.done = true;
            return Err(Error::Truncated("frame record"));
        }
        let frame = decode_record(&self.buf, self.frames_read, self.header.dims)?;
        self.frames_read += 1;
        Ok(Some(frame))
    }

    pub fn frames_read(&self) -> u64 {
        self.frames_read
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<FrameFeature>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.read_frame() {
            Ok(Some(f)) => Some(Ok(f)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Sequential `.vsf` encoder.
pub struct StreamWriter<W> {
    inner: W,
    dims: Dims,
    buf: Vec<u8>,
    written: u64,
}

impl<W: Write> StreamWriter<W> {
    /// Writes the header. Pass `None` for a stream of unknown length.
    pub fn new(mut inner: W, dims: Dims, frame_count: Option<u64>) -> Result<Self> {
        let header = encode_header(&StreamHeader { dims, frame_count }, STREAM_MAGIC)?;
        inner.write_all(&header)?;
        Ok(Self {
            inner,
            dims,
            buf: Vec::with_capacity(record_len(&dims)),
            written: 0,
        })
    }

    pub fn write_frame(&mut self, frame: &FrameFeature) -> Result<()> {
        if frame.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                what: "frame shape (d * P_h * P_w)",
                expected: self.dims.values_per_frame(),
                found: frame.dims().values_per_frame(),
            });
        }
        self.buf.clear();
        encode_record(frame, &mut self.buf);
        self.inner.write_all(&self.buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn frames_written(&self) -> u64 {
        self.written
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner)
    }
}

/// Encodes a complete stream with a declared frame count.
pub fn encode_stream(dims: Dims, frames: &[FrameFeature]) -> Result<Vec<u8>> {
    let mut w = StreamWriter::new(Vec::new(), dims, Some(frames.len() as u64))?;
    for f in frames {
        w.write_frame(f)?;
    }
    w.finish()
}
