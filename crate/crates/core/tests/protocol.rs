use proptest::prelude::*;
use pulmobell::protocol::{
    crc16, encode_frame, parse_payload, serialize_payload, AccelTriple, Decoder, Message,
    PpgPair, MAX_FRAME,
};

/// Shift-register CRC-16/CCITT-FALSE, one bit at a time.
fn crc16_bitwise(bytes: &[u8]) -> u16 {
    let mut reg: u16 = 0xFFFF;
    for &b in bytes {
        for i in 0..8 {
            let bit = (b >> (7 - i)) & 1;
            let top = (reg >> 15) as u8 & 1;
            reg <<= 1;
            if top ^ bit == 1 {
                reg ^= 0x1021;
            }
        }
    }
    reg
}

#[test]
fn crc_check_values() {
    assert_eq!(crc16(b""), 0xFFFF);
    assert_eq!(crc16_bitwise(b"123456789"), 0x29B1);
    assert_eq!(crc16(b"123456789"), 0x29B1);
    assert_eq!(crc16_bitwise(&[0x00]), 0xE1F0);
    assert_eq!(crc16(&[0x00]), 0xE1F0);
}

proptest! {
    #[test]
    fn crc_matches_bitwise_oracle(bytes in proptest::collection::vec(any::<u8>(), 0..600)) {
        prop_assert_eq!(crc16(&bytes), crc16_bitwise(&bytes));
    }
}

#[test]
fn ack_frame_is_bit_exact() {
    let bytes = encode_frame(
        &Message::Ack {
            acked_seq: 0,
            status: 0,
        },
        0,
    )
    .unwrap();
    let body = [0x01, 0x11, 0x00, 0x00, 0x03, 0x00, 0x00, 0x00, 0x00];
    assert_eq!(crc16_bitwise(&body), 0x67E4);
    assert_eq!(
        bytes,
        vec![0xA5, 0x01, 0x11, 0x00, 0x00, 0x03, 0x00, 0x00, 0x00, 0x00, 0xE4, 0x67]
    );
}

fn arb_message() -> impl Strategy<Value = Message> {
    let accel = (any::<i16>(), any::<i16>(), any::<i16>()).prop_map(|(x, y, z)| AccelTriple { x, y, z });
    let ppg = (any::<u16>(), any::<u16>()).prop_map(|(red, ir)| PpgPair { red, ir });
    prop_oneof![
        (any::<u32>(), any::<u16>(), proptest::collection::vec(accel, 0..=84)).prop_map(
            |(t0_ms, dt_us, samples)| Message::AccelBatch { t0_ms, dt_us, samples }
        ),
        (any::<u32>(), any::<u16>(), proptest::collection::vec(ppg, 0..=126)).prop_map(
            |(t0_ms, dt_us, samples)| Message::PpgBatch { t0_ms, dt_us, samples }
        ),
        (any::<u32>(), any::<u16>(), any::<u16>()).prop_map(|(t_ms, pm25_tenths, pm10_tenths)| {
            Message::AirQuality { t_ms, pm25_tenths, pm10_tenths }
        }),
        (any::<u32>(), any::<u16>(), any::<u16>(), any::<u16>(), any::<u16>(), any::<u8>())
            .prop_map(|(t_ms, spo2_tenths, rr_tenths, hr_tenths, rep_count, quality_flags)| {
                Message::DerivedMetrics { t_ms, spo2_tenths, rr_tenths, hr_tenths, rep_count, quality_flags }
            }),
        (any::<u32>(), any::<u8>(), any::<u16>())
            .prop_map(|(t_ms, event_code, arg)| Message::SessionEvent { t_ms, event_code, arg }),
        (any::<u8>(), any::<u16>()).prop_map(|(command_code, arg)| Message::Command { command_code, arg }),
        (any::<u16>(), any::<u8>()).prop_map(|(acked_seq, status)| Message::Ack { acked_seq, status }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn payload_and_frame_round_trip(m in arb_message(), seq in any::<u16>()) {
        let payload = serialize_payload(&m).unwrap();
        prop_assert_eq!(parse_payload(m.msg_type(), &payload).unwrap(), m.clone());

        let frame = encode_frame(&m, seq).unwrap();
        let len = u16::from_le_bytes([frame[5], frame[6]]) as usize;
        prop_assert_eq!(len, payload.len());
        prop_assert!(frame.len() <= MAX_FRAME);

        let mut d = Decoder::new();
        let frames = d.feed(&frame);
        prop_assert_eq!(frames.len(), 1);
        prop_assert_eq!(&frames[0].message, &m);
        prop_assert_eq!(frames[0].seq, seq);
    }

    #[test]
    fn fragmentation_does_not_change_output(
        msgs in proptest::collection::vec(arb_message(), 1..8),
        cuts in proptest::collection::vec(1usize..200, 1..40),
    ) {
        let mut stream = Vec::new();
        for (i, m) in msgs.iter().enumerate() {
            stream.extend(encode_frame(m, i as u16).unwrap());
        }
        let whole: Vec<_> = Decoder::new().feed(&stream);

        let mut d = Decoder::new();
        let mut split = Vec::new();
        let mut pos = 0;
        let mut k = 0;
        while pos < stream.len() {
            let step = cuts[k % cuts.len()].min(stream.len() - pos);
            split.extend(d.feed(&stream[pos..pos + step]));
            pos += step;
            k += 1;
            prop_assert!(d.buffered() <= MAX_FRAME + step);
        }
        prop_assert_eq!(split, whole);
        prop_assert_eq!(d.stats().crc_failures, 0);
    }

    #[test]
    fn garbage_without_sof_never_hides_frames(
        msgs in proptest::collection::vec(arb_message(), 1..6),
        garbage in proptest::collection::vec(proptest::collection::vec(any::<u8>().prop_filter("no SOF", |b| *b != 0xA5), 0..50), 6),
    ) {
        let mut stream = Vec::new();
        for (i, m) in msgs.iter().enumerate() {
            stream.extend(&garbage[i]);
            stream.extend(encode_frame(m, i as u16).unwrap());
        }
        let frames = Decoder::new().feed(&stream);
        let got: Vec<_> = frames.into_iter().map(|f| f.message).collect();
        prop_assert_eq!(got, msgs);
    }
}

#[test]
fn garbage_prefix_is_skipped() {
    let frame = encode_frame(
        &Message::SessionEvent {
            t_ms: 1000,
            event_code: 2,
            arg: 1,
        },
        3,
    )
    .unwrap();
    let mut stream = vec![0x13, 0x37, 0x00, 0xFF, 0x42, 0x01, 0x11];
    stream.extend(&frame);
    let mut d = Decoder::new();
    let frames = d.feed(&stream);
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0].seq, 3);
    assert!(d.stats().bytes_skipped >= 7);
}

#[test]
fn every_single_bit_flip_is_rejected() {
    let frame = encode_frame(
        &Message::DerivedMetrics {
            t_ms: 42_000,
            spo2_tenths: 970,
            rr_tenths: 150,
            hr_tenths: 750,
            rep_count: 7,
            quality_flags: 0b111,
        },
        99,
    )
    .unwrap();
    // pad with zeros so a flipped length field cannot leave the candidate pending
    let padding = vec![0u8; MAX_FRAME];
    for byte in 1..frame.len() {
        for bit in 0..8 {
            let mut corrupted = frame.clone();
            corrupted[byte] ^= 1 << bit;
            corrupted.extend(&padding);
            let mut d = Decoder::new();
            let frames = d.feed(&corrupted);
            assert!(frames.is_empty(), "flip at byte {byte} bit {bit} accepted");
            assert!(d.stats().crc_failures >= 1, "flip at byte {byte} bit {bit} not counted");
        }
    }
}

#[test]
fn crc_failure_resumes_after_the_bad_sof() {
    let good = encode_frame(&Message::Command { command_code: 1, arg: 0 }, 10).unwrap();
    let mut bad = encode_frame(&Message::Command { command_code: 2, arg: 0 }, 11).unwrap();
    let last = bad.len() - 1;
    bad[last] ^= 0x01;
    let mut stream = bad;
    stream.extend(&good);
    let mut d = Decoder::new();
    let frames = d.feed(&stream);
    assert_eq!(frames.len(), 1);
    assert_eq!(frames[0].seq, 10);
    assert_eq!(d.stats().crc_failures, 1);
}
