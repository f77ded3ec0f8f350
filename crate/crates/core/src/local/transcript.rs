use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::ProtocolSpec;
use crate::error::{Error, Result};

/// The single message a party sends: one released vector per level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalMessage {
    pub party_id: usize,
    pub payload: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub spec: ProtocolSpec,
    pub m: usize,
    pub messages: Vec<LocalMessage>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ProtocolSpec,
    m: usize,
    parties: usize,
}

impl Transcript {
    /// Newline-delimited JSON: a header line, then one message per line.
    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            spec: self.spec,
            m: self.m,
            parties: self.messages.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for msg in &self.messages {
            serde_json::to_writer(&mut w, msg)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_ndjson<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()));
        let header: Header = match lines.next() {
            Some(line) => serde_json::from_str(&line?)?,
            None => return Err(Error::Parse("empty transcript".into())),
        };
        let messages = lines
            .map(|l| Ok(serde_json::from_str::<LocalMessage>(&l?)?))
            .collect::<Result<Vec<_>>>()?;
        if messages.len() != header.parties {
            return Err(Error::Parse(format!(
                "header announces {} parties, found {} messages",
                header.parties,
                messages.len()
            )));
        }
        Ok(Self {
            spec: header.spec,
            m: header.m,
            messages,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::local::ProtocolKind;

    #[test]
    fn ndjson_round_trip() {
        let t = Transcript {
            spec: ProtocolSpec::new(ProtocolKind::Lpm, 0.5, None),
            m: 2,
            messages: vec![
                LocalMessage {
                    party_id: 0,
                    payload: vec![vec![0.1, -3.0]],
                },
                LocalMessage {
                    party_id: 1,
                    payload: vec![vec![1e-300, 2.5]],
                },
            ],
        };
        let mut buf = Vec::new();
        t.write_ndjson(&mut buf).unwrap();
        assert_eq!(String::from_utf8_lossy(&buf).lines().count(), 3);
        assert_eq!(Transcript::read_ndjson(&buf[..]).unwrap(), t);
    }
}
