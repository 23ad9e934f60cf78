//! Byte-level cold tier backends.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;

use parking_lot::Mutex;

pub const COLD_MAGIC: [u8; 4] = *b"VSC1";
pub const COLD_VERSION: u16 = 1;
pub const COLD_HEADER_LEN: u64 = 6;

fn cold_header() -> [u8; COLD_HEADER_LEN as usize] {
    let v = COLD_VERSION.to_le_bytes();
    [
        COLD_MAGIC[0],
        COLD_MAGIC[1],
        COLD_MAGIC[2],
        COLD_MAGIC[3],
        v[0],
        v[1],
    ]
}

/// Append-only byte storage holding encoded frame records.
///
/// Readers may run concurrently; appends require exclusive access.
#[allow(clippy::len_without_is_empty)]
pub trait ColdBackend: Send + Sync {
    /// Current length in bytes, header included.
    fn len(&self) -> u64;

    /// Appends `bytes` and returns the offset they start at.
    fn append(&mut self, bytes: &[u8]) -> io::Result<u64>;

    fn read_at(&self, offset: u64, len: usize) -> io::Result<Vec<u8>>;

    /// Drops everything past `len`. Used to roll back a failed append.
    fn truncate(&mut self, len: u64) -> io::Result<()>;

    fn sync(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Cold tier held in process memory.
#[derive(Debug, Clone)]
pub struct MemoryBackend {
    bytes: Vec<u8>,
}

impl Default for MemoryBackend {
    fn default() -> Self {
        Self {
            bytes: cold_header().to_vec(),
        }
    }
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

impl ColdBackend for MemoryBackend {
    fn len(&self) -> u64 {
        self.bytes.len() as u64
    }

    fn append(&mut self, bytes: &[u8]) -> io::Result<u64> {
        let offset = self.len();
        self.bytes.extend_from_slice(bytes);
        Ok(offset)
    }

    fn read_at(&self, offset: u64, len: usize) -> io::Result<Vec<u8>> {
        let start = usize::try_from(offset).map_err(|_| eof())?;
        let end = start.checked_add(len).ok_or_else(eof)?;
        self.bytes
            .get(start..end)
            .map(<[u8]>::to_vec)
            .ok_or_else(eof)
    }

    fn truncate(&mut self, len: u64) -> io::Result<()> {
        self.bytes.truncate(len as usize);
        Ok(())
    }
}

fn eof() -> io::Error {
    io::Error::new(io::ErrorKind::UnexpectedEof, "read past end of cold tier")
}

/// Cold tier backed by a single append-only file.
#[derive(Debug)]
pub struct FileBackend {
    file: Mutex<File>,
    len: u64,
    fsync: bool,
}

impl FileBackend {
    /// Creates (or truncates) the file and writes the header.
    pub fn create(path: &Path, fsync: bool) -> io::Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        file.write_all(&cold_header())?;
        if fsync {
            file.sync_data()?;
        }
        Ok(Self {
            file: Mutex::new(file),
            len: COLD_HEADER_LEN,
            fsync,
        })
    }

    /// Opens an existing file, validating its header.
    pub fn open(path: &Path, fsync: bool) -> io::Result<Self> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let mut header = [0u8; COLD_HEADER_LEN as usize];
        file.read_exact(&mut header).map_err(|_| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                "cold file shorter than its header",
            )
        })?;
        if header[..4] != COLD_MAGIC {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "bad cold file magic",
            ));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != COLD_VERSION {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("unsupported cold file version {version}"),
            ));
        }
        let len = file.seek(SeekFrom::End(0))?;
        Ok(Self {
            file: Mutex::new(file),
            len,
            fsync,
        })
    }
}

impl ColdBackend for FileBackend {
    fn len(&self) -> u64 {
        self.len
    }

    fn append(&mut self, bytes: &[u8]) -> io::Result<u64> {
        let offset = self.len;
        let file = self.file.get_mut();
        file.seek(SeekFrom::Start(offset))?;
        file.write_all(bytes)?;
        if self.fsync {
            file.sync_data()?;
        }
        self.len += bytes.len() as u64;
        Ok(offset)
    }

    fn read_at(&self, offset: u64, len: usize) -> io::Result<Vec<u8>> {
        if offset
            .checked_add(len as u64)
            .is_none_or(|end| end > self.len)
        {
            return Err(eof());
        }
        let mut file = self.file.lock();
        file.seek(SeekFrom::Start(offset))?;
        let mut buf = vec![0; len];
        file.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn truncate(&mut self, len: u64) -> io::Result<()> {
        self.file.get_mut().set_len(len)?;
        self.len = len;
        Ok(())
    }

    fn sync(&mut self) -> io::Result<()> {
        self.file.get_mut().sync_data()
    }
}
