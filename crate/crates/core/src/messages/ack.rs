use serde::{Deserialize, Serialize};

use crate::codec::{Reader, WriteExt};
use crate::error::DecodeError;

/// `(epoch, sequence_number)` of a DTLS record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordNumber {
    pub epoch: u64,
    pub seq: u64,
}

impl RecordNumber {
    pub const WIRE_LEN: usize = 16;
}

/// DTLS ACK content: a byte-length-prefixed list of 16-byte record numbers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Ack {
    pub records: Vec<RecordNumber>,
}

impl Ack {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + 16 * self.records.len());
        out.nested16(|w| {
            for r in &self.records {
                w.put_u64(r.epoch);
                w.put_u64(r.seq);
            }
        });
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let list = r.vec16()?;
        r.finish()?;
        if list.len() % 16 != 0 {
            return Err(DecodeError::LengthMismatch);
        }
        let mut lr = Reader::new(list);
        let mut records = Vec::with_capacity(list.len() / 16);
        while !lr.is_empty() {
            records.push(RecordNumber { epoch: lr.u64()?, seq: lr.u64()? });
        }
        Ok(Ack { records })
    }
}

pub fn build_ack(records: &[RecordNumber]) -> Ack {
    Ack { records: records.to_vec() }
}
