//! Timetag file formats.
//!
//! Binary `TTB1`: little-endian, magic `"TTB1"`, a `u32` length-prefixed JSON
//! header (the [`StreamHeader`]), then packed records of
//! `{channel: 1 byte, tick: u64}` until end of file.
//!
//! CSV: a `# TTB1CSV <header json>` comment line, a `channel,tick` header
//! row, then one record per line. Lossless relative to the binary format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::simulator::{Channel, StreamHeader, TimetagRecord, TimetagStream};

pub const TTB1_MAGIC: &[u8; 4] = b"TTB1";
const CSV_MAGIC: &str = "# TTB1CSV ";

pub fn write_stream<W: Write>(stream: &TimetagStream, mut w: W) -> Result<()> {
    let header = serde_json::to_vec(&stream.header)?;
    w.write_all(TTB1_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for r in &stream.records {
        w.write_all(&[r.channel.byte()])?;
        w.write_all(&r.tick.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_stream<R: Read>(mut r: R) -> Result<TimetagStream> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::BadFormat("file too short for magic".into()))?;
    if &magic != TTB1_MAGIC {
        return Err(Error::BadFormat(format!("bad magic {magic:?}")));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)
        .map_err(|_| Error::BadFormat("missing header length".into()))?;
    let mut header_bytes = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header_bytes)
        .map_err(|_| Error::BadFormat("truncated header".into()))?;
    let header: StreamHeader = serde_json::from_slice(&header_bytes)?;

    let mut records = Vec::new();
    let mut buf = [0u8; 9];
    while let Some(record) = read_record(&mut r, &mut buf)? {
        records.push(record);
    }
    Ok(TimetagStream { header, records })
}

fn read_record<R: Read>(r: &mut R, buf: &mut [u8; 9]) -> Result<Option<TimetagRecord>> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            return if filled == 0 {
                Ok(None)
            } else {
                Err(Error::BadFormat(format!(
                    "trailing partial record of {filled} bytes"
                )))
            };
        }
        filled += n;
    }
    let channel = Channel::from_byte(buf[0])
        .ok_or_else(|| Error::BadFormat(format!("unknown channel byte {}", buf[0])))?;
    let tick = u64::from_le_bytes(buf[1..9].try_into().unwrap());
    Ok(Some(TimetagRecord { channel, tick }))
}

pub fn write_stream_to_path<P: AsRef<Path>>(stream: &TimetagStream, path: P) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_stream(stream, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_stream_from_path<P: AsRef<Path>>(path: P) -> Result<TimetagStream> {
    read_stream(BufReader::new(File::open(path)?))
}

pub fn stream_to_csv(stream: &TimetagStream) -> Result<String> {
    let mut out = String::from(CSV_MAGIC);
    out.push_str(&serde_json::to_string(&stream.header)?);
    out.push_str("\nchannel,tick\n");
    for r in &stream.records {
        let name = match r.channel {
            Channel::AlicePlus => "alice_plus",
            Channel::BobPlus => "bob_plus",
        };
        out.push_str(&format!("{name},{}\n", r.tick));
    }
    Ok(out)
}

pub fn stream_from_csv(text: &str) -> Result<TimetagStream> {
    let mut lines = text.lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::BadFormat("empty csv".into()))?;
    let header_json = first
        .strip_prefix(CSV_MAGIC)
        .ok_or_else(|| Error::BadFormat("missing TTB1CSV header line".into()))?;
    let header: StreamHeader = serde_json::from_str(header_json)?;
    let mut records = Vec::new();
    for line in lines.skip(1).filter(|l| !l.trim().is_empty()) {
        let (name, tick) = line
            .split_once(',')
            .ok_or_else(|| Error::BadFormat(format!("bad csv row {line:?}")))?;
        let channel = match name {
            "alice_plus" => Channel::AlicePlus,
            "bob_plus" => Channel::BobPlus,
            other => return Err(Error::BadFormat(format!("unknown channel {other:?}"))),
        };
        records.push(TimetagRecord {
            channel,
            tick: tick
                .trim()
                .parse()
                .map_err(|_| Error::BadFormat(format!("bad tick {tick:?}")))?,
        });
    }
    Ok(TimetagStream { header, records })
}

/// Read either format, keyed on the file's first bytes.
pub fn read_stream_auto<P: AsRef<Path>>(path: P) -> Result<TimetagStream> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(TTB1_MAGIC) {
        read_stream(&bytes[..])
    } else {
        stream_from_csv(
            std::str::from_utf8(&bytes)
                .map_err(|_| Error::BadFormat("neither TTB1 nor utf-8 csv".into()))?,
        )
    }
}
