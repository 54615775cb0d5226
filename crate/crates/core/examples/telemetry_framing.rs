//! Encodes messages into frames, buries them in line noise, and decodes
//! them back one byte at a time.

use pulmobell::protocol::{Decoder, FrameWriter, Message};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let messages = [
        Message::SessionEvent { t_ms: 0, event_code: 0, arg: 0x1234 },
        Message::AirQuality { t_ms: 0, pm25_tenths: 80, pm10_tenths: 200 },
        Message::DerivedMetrics { t_ms: 1000, spo2_tenths: 968, rr_tenths: 150, hr_tenths: 752, rep_count: 0, quality_flags: 0b111 },
        Message::Ack { acked_seq: 4, status: 0 },
    ];
    let mut writer = FrameWriter::new();
    let mut stream = Vec::new();
    for (i, m) in messages.iter().enumerate() {
        let (frame, seq) = writer.encode(m)?;
        println!("seq {seq}: {} bytes {:02x?}", frame.len(), &frame[..frame.len().min(12)]);
        stream.extend(std::iter::repeat_n(0xA5, i));
        stream.extend([0x00, 0xFF, 0x13]);
        stream.extend(frame);
    }

    let mut decoder = Decoder::new();
    for byte in &stream {
        for f in decoder.feed(std::slice::from_ref(byte)) {
            println!("decoded seq {} {:?}", f.seq, f.message);
        }
    }
    // a stray SOF can hold later frames until enough bytes arrive to
    // disprove it; at end of stream, finish() rescans what is left
    for f in decoder.finish() {
        println!("decoded at end seq {} {:?}", f.seq, f.message);
    }
    println!("{:?}", decoder.stats());
    Ok(())
}
