//! Fixed-layout binary record for one Basic Safety Message.
//!
//! Big-endian, 25 bytes:
//!
//! | offset | size | field          | unit                  |
//! |--------|------|----------------|-----------------------|
//! | 0      | 4    | `temp_id`      | u32                   |
//! | 4      | 1    | `msg_count`    | 0..=127               |
//! | 5      | 4    | `t_ms`         | ms since scenario start|
//! | 9      | 4    | `lat_e7`       | i32, degrees × 1e7    |
//! | 13     | 4    | `lon_e7`       | i32, degrees × 1e7    |
//! | 17     | 4    | `elev_cm`      | i32, centimeters      |
//! | 21     | 2    | `speed_cmps`   | u16, cm/s             |
//! | 23     | 2    | `heading_cdeg` | u16, 0..=35999        |

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BSM_RECORD_LEN: usize = 25;

pub const MAX_MSG_COUNT: u8 = 127;
pub const HEADING_LIMIT_CDEG: u16 = 36_000;
pub const LAT_LIMIT_E7: i32 = 900_000_000;
pub const LON_LIMIT_E7: i32 = 1_800_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("BSM record must be {BSM_RECORD_LEN} bytes, got {0}")]
    WrongLength(usize),
    #[error("msg_count {0} exceeds 127")]
    MsgCount(u8),
    #[error("heading {0} cdeg not below 36000")]
    Heading(u16),
    #[error("latitude {0} (1e-7 deg) outside ±90°")]
    Latitude(i32),
    #[error("longitude {0} (1e-7 deg) outside ±180°")]
    Longitude(i32),
    #[error("truncated capture record")]
    TruncatedCapture,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BsmMessage {
    pub temp_id: u32,
    pub msg_count: u8,
    pub t_ms: u32,
    pub lat_e7: i32,
    pub lon_e7: i32,
    pub elev_cm: i32,
    pub speed_cmps: u16,
    pub heading_cdeg: u16,
}

impl BsmMessage {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.msg_count > MAX_MSG_COUNT {
            return Err(CodecError::MsgCount(self.msg_count));
        }
        if self.heading_cdeg >= HEADING_LIMIT_CDEG {
            return Err(CodecError::Heading(self.heading_cdeg));
        }
        if !(-LAT_LIMIT_E7..=LAT_LIMIT_E7).contains(&self.lat_e7) {
            return Err(CodecError::Latitude(self.lat_e7));
        }
        if !(-LON_LIMIT_E7..=LON_LIMIT_E7).contains(&self.lon_e7) {
            return Err(CodecError::Longitude(self.lon_e7));
        }
        Ok(())
    }

    pub fn latitude_deg(&self) -> f64 {
        self.lat_e7 as f64 * 1e-7
    }

    pub fn longitude_deg(&self) -> f64 {
        self.lon_e7 as f64 * 1e-7
    }

    pub fn elevation_m(&self) -> f64 {
        self.elev_cm as f64 * 0.01
    }

    pub fn speed_mps(&self) -> f64 {
        self.speed_cmps as f64 * 0.01
    }

    pub fn heading_deg(&self) -> f64 {
        self.heading_cdeg as f64 * 0.01
    }

    pub fn t_s(&self) -> f64 {
        self.t_ms as f64 * 1e-3
    }
}

pub fn encode_bsm(m: &BsmMessage) -> Result<[u8; BSM_RECORD_LEN], CodecError> {
    m.validate()?;
    let mut out = [0u8; BSM_RECORD_LEN];
    out[0..4].copy_from_slice(&m.temp_id.to_be_bytes());
    out[4] = m.msg_count;
    out[5..9].copy_from_slice(&m.t_ms.to_be_bytes());
    out[9..13].copy_from_slice(&m.lat_e7.to_be_bytes());
    out[13..17].copy_from_slice(&m.lon_e7.to_be_bytes());
    out[17..21].copy_from_slice(&m.elev_cm.to_be_bytes());
    out[21..23].copy_from_slice(&m.speed_cmps.to_be_bytes());
    out[23..25].copy_from_slice(&m.heading_cdeg.to_be_bytes());
    Ok(out)
}

pub fn decode_bsm(bytes: &[u8]) -> Result<BsmMessage, CodecError> {
    let b: &[u8; BSM_RECORD_LEN] = bytes
        .try_into()
        .map_err(|_| CodecError::WrongLength(bytes.len()))?;
    let u32_at = |i: usize| u32::from_be_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
    let i32_at = |i: usize| i32::from_be_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
    let u16_at = |i: usize| u16::from_be_bytes([b[i], b[i + 1]]);
    let m = BsmMessage {
        temp_id: u32_at(0),
        msg_count: b[4],
        t_ms: u32_at(5),
        lat_e7: i32_at(9),
        lon_e7: i32_at(13),
        elev_cm: i32_at(17),
        speed_cmps: u16_at(21),
        heading_cdeg: u16_at(23),
    };
    m.validate()?;
    Ok(m)
}

/// Writes one capture entry: 4-byte big-endian tick index, then the record.
pub fn write_capture_record<W: Write + ?Sized>(w: &mut W, tick: u32, m: &BsmMessage) -> io::Result<()> {
    let rec = encode_bsm(m).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e))?;
    w.write_all(&tick.to_be_bytes())?;
    w.write_all(&rec)
}

/// Reads a whole capture stream back into `(tick, message)` pairs.
pub fn read_capture<R: Read>(r: &mut R) -> io::Result<Vec<(u32, BsmMessage)>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    const ENTRY: usize = 4 + BSM_RECORD_LEN;
    if buf.len() % ENTRY != 0 {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            CodecError::TruncatedCapture,
        ));
    }
    buf.chunks_exact(ENTRY)
        .map(|c| {
            let tick = u32::from_be_bytes([c[0], c[1], c[2], c[3]]);
            decode_bsm(&c[4..])
                .map(|m| (tick, m))
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_message_is_zero_bytes() {
        assert_eq!(encode_bsm(&BsmMessage::default()).unwrap(), [0u8; 25]);
    }

    #[test]
    fn fixed_layout() {
        let m = BsmMessage {
            temp_id: 0x0102_0304,
            msg_count: 5,
            t_ms: 100,
            lat_e7: 372_296_000,
            lon_e7: -804_139_000,
            elev_cm: 63_400,
            speed_cmps: 1_200,
            heading_cdeg: 27_000,
        };
        let b = encode_bsm(&m).unwrap();
        assert_eq!(&b[0..5], &[1, 2, 3, 4, 5]);
        assert_eq!(&b[5..9], &[0, 0, 0, 100]);
        assert_eq!(&b[9..13], &372_296_000i32.to_be_bytes());
        assert_eq!(&b[13..17], &(-804_139_000i32).to_be_bytes());
        assert_eq!(&b[23..25], &[0x69, 0x78]);
        assert_eq!(decode_bsm(&b).unwrap(), m);
    }

    #[test]
    fn latitude_fixed_point() {
        assert_eq!((37.2296f64 * 1e7).round() as i32, 372_296_000);
    }

    #[test]
    fn length_and_range_errors() {
        assert_eq!(decode_bsm(&[0u8; 24]), Err(CodecError::WrongLength(24)));
        assert_eq!(decode_bsm(&[0u8; 26]), Err(CodecError::WrongLength(26)));
        let mut b = [0u8; 25];
        b[23..25].copy_from_slice(&36_000u16.to_be_bytes());
        assert_eq!(decode_bsm(&b), Err(CodecError::Heading(36_000)));
        let mut b = [0u8; 25];
        b[4] = 128;
        assert_eq!(decode_bsm(&b), Err(CodecError::MsgCount(128)));
        let bad = BsmMessage {
            lat_e7: 900_000_001,
            ..Default::default()
        };
        assert_eq!(encode_bsm(&bad), Err(CodecError::Latitude(900_000_001)));
    }

    #[test]
    fn capture_round_trip() {
        let msgs = [
            (
                0u32,
                BsmMessage {
                    temp_id: 7,
                    ..Default::default()
                },
            ),
            (
                3u32,
                BsmMessage {
                    temp_id: 9,
                    msg_count: 127,
                    heading_cdeg: 35_999,
                    ..Default::default()
                },
            ),
        ];
        let mut buf = Vec::new();
        for (tick, m) in &msgs {
            write_capture_record(&mut buf, *tick, m).unwrap();
        }
        assert_eq!(buf.len(), 2 * 29);
        assert_eq!(read_capture(&mut buf.as_slice()).unwrap(), msgs.to_vec());
        assert!(read_capture(&mut &buf[..28]).is_err());
    }

    pub(crate) fn valid_message() -> impl Strategy<Value = BsmMessage> {
        (
            any::<u32>(),
            0u8..=127,
            any::<u32>(),
            -LAT_LIMIT_E7..=LAT_LIMIT_E7,
            -LON_LIMIT_E7..=LON_LIMIT_E7,
            any::<i32>(),
            any::<u16>(),
            0u16..36_000,
        )
            .prop_map(
                |(temp_id, msg_count, t_ms, lat_e7, lon_e7, elev_cm, speed_cmps, heading_cdeg)| BsmMessage {
                    temp_id,
                    msg_count,
                    t_ms,
                    lat_e7,
                    lon_e7,
                    elev_cm,
                    speed_cmps,
                    heading_cdeg,
                },
            )
    }

    proptest! {
        #[test]
        fn round_trip(m in valid_message()) {
            let bytes = encode_bsm(&m).unwrap();
            prop_assert_eq!(decode_bsm(&bytes).unwrap(), m);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 25)) {
            if let Ok(m) = decode_bsm(&bytes) {
                prop_assert_eq!(encode_bsm(&m).unwrap().to_vec(), bytes);
            }
        }
    }
}
