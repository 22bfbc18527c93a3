use std::io::{BufReader, BufWriter, Read, Write};

use super::{Alignment, ExposureEvent, MemeEvents, ProfileIndex, ZeroResidual};
use crate::ingest::{MemeCatalog, MemeKind};
use crate::topics::TopicalityClass;
use crate::{Error, MemeId, Result};

pub const SPOOL_MAGIC: &[u8; 6] = b"DLEVT1";
const RECORD_BYTES: usize = 8 + 4 + 2 + 4 + 1;

const FLAG_ADOPTED: u8 = 1;
const FLAG_AGGREGATE: u8 = 2;
const CLASS_SHIFT: u8 = 2;

/// Per-meme attributes needed to filter events by meme class and kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemeMeta {
    pub meme: MemeId,
    pub kind: MemeKind,
    pub class: TopicalityClass,
}

/// Metadata of every accepted meme that has a profile, in id order.
pub fn meme_metas(catalog: &MemeCatalog, profiles: &ProfileIndex) -> Vec<MemeMeta> {
    catalog
        .accepted()
        .filter_map(|e| {
            Some(MemeMeta {
                meme: e.id,
                kind: e.kind,
                class: profiles.meme_class(e.id)?,
            })
        })
        .collect()
}

/// Spool row: a single event, or (when `aggregate`) `user` identical censored
/// κ = 0 events whose user ids were not kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventRecord {
    pub meme: MemeId,
    pub user: u64,
    pub kappa: u32,
    pub alignment: Alignment,
    pub adopted: bool,
    pub aggregate: bool,
    pub user_class: TopicalityClass,
}

impl EventRecord {
    pub fn weight(&self) -> u64 {
        if self.aggregate {
            self.user
        } else {
            1
        }
    }

    fn flags(&self) -> u8 {
        let class = match self.user_class {
            TopicalityClass::Topical => 0,
            TopicalityClass::Middle => 1,
            TopicalityClass::NonTopical => 2,
        };
        (self.adopted as u8) | ((self.aggregate as u8) << 1) | (class << CLASS_SHIFT)
    }
}

impl From<&ExposureEvent> for EventRecord {
    fn from(e: &ExposureEvent) -> Self {
        EventRecord {
            meme: e.meme,
            user: e.user,
            kappa: e.kappa,
            alignment: e.alignment,
            adopted: e.adopted,
            aggregate: false,
            user_class: e.user_class,
        }
    }
}

impl From<&ZeroResidual> for EventRecord {
    fn from(r: &ZeroResidual) -> Self {
        EventRecord {
            meme: r.meme,
            user: r.count,
            kappa: 0,
            alignment: r.alignment,
            adopted: false,
            aggregate: true,
            user_class: r.user_class,
        }
    }
}

impl MemeEvents {
    pub fn records(&self) -> impl Iterator<Item = EventRecord> + '_ {
        self.events
            .iter()
            .map(EventRecord::from)
            .chain(self.residuals.iter().map(EventRecord::from))
    }
}

fn kind_code(k: MemeKind) -> u8 {
    match k {
        MemeKind::Hashtag => 0,
        MemeKind::Url => 1,
    }
}

fn class_code(c: TopicalityClass) -> u8 {
    match c {
        TopicalityClass::Topical => 0,
        TopicalityClass::Middle => 1,
        TopicalityClass::NonTopical => 2,
    }
}

fn class_from(code: u8) -> Result<TopicalityClass> {
    match code {
        0 => Ok(TopicalityClass::Topical),
        1 => Ok(TopicalityClass::Middle),
        2 => Ok(TopicalityClass::NonTopical),
        c => Err(Error::data(format!("bad class code {c} in spool"))),
    }
}

/// Fixed-width binary event spool.
///
/// Layout: magic, `u32` meme count, that many `(meme u32, kind u8, class u8)`
/// entries, then 19-byte records `(user u64, meme u32, kappa u16, alignment f32, flags u8)`
/// until end of file. Little-endian.
pub struct SpoolWriter<W: Write> {
    out: BufWriter<W>,
    records: u64,
}

impl<W: Write> SpoolWriter<W> {
    pub fn new(out: W, memes: &[MemeMeta]) -> Result<Self> {
        let mut out = BufWriter::new(out);
        out.write_all(SPOOL_MAGIC)?;
        out.write_all(&(memes.len() as u32).to_le_bytes())?;
        for m in memes {
            out.write_all(&m.meme.to_le_bytes())?;
            out.write_all(&[kind_code(m.kind), class_code(m.class)])?;
        }
        Ok(SpoolWriter { out, records: 0 })
    }

    pub fn write(&mut self, r: &EventRecord) -> Result<()> {
        let mut buf = [0u8; RECORD_BYTES];
        buf[0..8].copy_from_slice(&r.user.to_le_bytes());
        buf[8..12].copy_from_slice(&r.meme.to_le_bytes());
        buf[12..14].copy_from_slice(&(r.kappa.min(u16::MAX as u32) as u16).to_le_bytes());
        buf[14..18].copy_from_slice(&(r.alignment.value() as f32).to_le_bytes());
        buf[18] = r.flags();
        self.out.write_all(&buf)?;
        self.records += 1;
        Ok(())
    }

    pub fn write_meme(&mut self, m: &MemeEvents) -> Result<()> {
        for r in m.records() {
            self.write(&r)?;
        }
        Ok(())
    }

    /// Flush and return the number of records written.
    pub fn finish(mut self) -> Result<u64> {
        self.out.flush()?;
        Ok(self.records)
    }
}

pub struct SpoolReader<R: Read> {
    input: BufReader<R>,
    memes: Vec<MemeMeta>,
    done: bool,
}

impl<R: Read> SpoolReader<R> {
    pub fn new(input: R) -> Result<Self> {
        let mut input = BufReader::new(input);
        let mut magic = [0u8; 6];
        input
            .read_exact(&mut magic)
            .map_err(|_| Error::data("event spool is truncated"))?;
        if &magic != SPOOL_MAGIC {
            return Err(Error::data("not an event spool (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut memes = Vec::with_capacity(n);
        for _ in 0..n {
            input.read_exact(&mut b4)?;
            let mut b2 = [0u8; 2];
            input.read_exact(&mut b2)?;
            let kind = match b2[0] {
                0 => MemeKind::Hashtag,
                1 => MemeKind::Url,
                c => return Err(Error::data(format!("bad meme kind code {c} in spool"))),
            };
            memes.push(MemeMeta {
                meme: u32::from_le_bytes(b4),
                kind,
                class: class_from(b2[1])?,
            });
        }
        Ok(SpoolReader {
            input,
            memes,
            done: false,
        })
    }

    pub fn memes(&self) -> &[MemeMeta] {
        &self.memes
    }

    fn read_record(&mut self) -> Result<Option<EventRecord>> {
        let mut buf = [0u8; RECORD_BYTES];
        let mut filled = 0;
        while filled < RECORD_BYTES {
            let n = self.input.read(&mut buf[filled..])?;
            if n == 0 {
                if filled == 0 {
                    return Ok(None);
                }
                return Err(Error::data("event spool ends mid-record"));
            }
            filled += n;
        }
        let flags = buf[18];
        let alignment = f32::from_le_bytes(buf[14..18].try_into().unwrap());
        Ok(Some(EventRecord {
            user: u64::from_le_bytes(buf[0..8].try_into().unwrap()),
            meme: u32::from_le_bytes(buf[8..12].try_into().unwrap()),
            kappa: u16::from_le_bytes(buf[12..14].try_into().unwrap()) as u32,
            alignment: Alignment::from_f64(alignment as f64),
            adopted: flags & FLAG_ADOPTED != 0,
            aggregate: flags & FLAG_AGGREGATE != 0,
            user_class: class_from(flags >> CLASS_SHIFT)?,
        }))
    }
}

impl<R: Read> Iterator for SpoolReader<R> {
    type Item = Result<EventRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.read_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Human-readable dump: `meme,user,kappa,alignment,adopted,count,user_class`.
/// Aggregate rows leave `user` empty and carry their multiplicity in `count`.
pub fn write_events_csv<W: Write>(
    mut w: W,
    records: impl IntoIterator<Item = EventRecord>,
) -> std::io::Result<()> {
    writeln!(w, "meme,user,kappa,alignment,adopted,count,user_class")?;
    for r in records {
        let user = if r.aggregate { String::new() } else { r.user.to_string() };
        writeln!(
            w,
            "{},{},{},{:.4},{},{},{}",
            r.meme,
            user,
            r.kappa,
            r.alignment.value(),
            r.adopted as u8,
            r.weight(),
            r.user_class
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn class_strategy() -> impl Strategy<Value = TopicalityClass> {
        prop_oneof![
            Just(TopicalityClass::Topical),
            Just(TopicalityClass::Middle),
            Just(TopicalityClass::NonTopical)
        ]
    }

    fn record_strategy() -> impl Strategy<Value = EventRecord> {
        (any::<u32>(), any::<u64>(), 0u32..40, 0u16..=10_000, any::<bool>(), any::<bool>(), class_strategy())
            .prop_map(|(meme, user, kappa, a, adopted, aggregate, user_class)| EventRecord {
                meme,
                user,
                kappa,
                alignment: Alignment::from_raw(a),
                adopted,
                aggregate,
                user_class,
            })
    }

    proptest! {
        #[test]
        fn spool_round_trips(records in proptest::collection::vec(record_strategy(), 0..50)) {
            let memes = [MemeMeta { meme: 3, kind: MemeKind::Url, class: TopicalityClass::NonTopical }];
            let mut buf = Vec::new();
            let mut w = SpoolWriter::new(&mut buf, &memes).unwrap();
            for r in &records {
                w.write(r).unwrap();
            }
            prop_assert_eq!(w.finish().unwrap(), records.len() as u64);
            prop_assert_eq!(buf.len(), 6 + 4 + 6 + 19 * records.len());
            let reader = SpoolReader::new(buf.as_slice()).unwrap();
            prop_assert_eq!(reader.memes(), &memes[..]);
            let back: Vec<EventRecord> = reader.map(|r| r.unwrap()).collect();
            prop_assert_eq!(back, records);
        }
    }

    #[test]
    fn truncated_and_foreign_files_are_rejected() {
        assert!(SpoolReader::new(&b"DLEVT"[..]).is_err());
        assert!(SpoolReader::new(&b"XXXXXX\0\0\0\0"[..]).is_err());
        let mut buf = Vec::new();
        let w = SpoolWriter::new(&mut buf, &[]).unwrap();
        w.finish().unwrap();
        buf.extend_from_slice(&[1, 2, 3]);
        let mut r = SpoolReader::new(buf.as_slice()).unwrap();
        assert!(r.next().unwrap().is_err());
    }
}
