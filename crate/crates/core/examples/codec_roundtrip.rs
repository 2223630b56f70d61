// Encode a batch into coded columns, corrupt up to `capacity` of them and
// decode it back, with both bit codes.

use s2arq::bits::Bits;
use s2arq::codec::{decode_batch, encode_batch, BitCodeKind, CodecParams, MessageBatch};

pub fn run_example() -> anyhow::Result<()> {
    let params = CodecParams::new(2, 2, 1)?;
    let batch = MessageBatch::new(vec!["01".parse()?, "10".parse()?], &params)?;
    let mut columns = encode_batch(&batch, &params)?;
    for c in &columns {
        println!("packet {} carries {}", c.label, c.data);
    }
    columns[2].data = "11".parse()?;
    let decoded = decode_batch(&columns, &params)?;
    println!("after corrupting column 3: {decoded}");
    anyhow::ensure!(decoded == batch, "repetition code failed to correct");

    let rs = CodecParams::with_code(2, 32, 2, BitCodeKind::ReedSolomon)?;
    let messages: Vec<Bits> = (0..2u64)
        .map(|i| Bits::from_u64(0xDEAD_BEEF ^ i, 32))
        .collect();
    let batch = MessageBatch::new(messages, &rs)?;
    let mut columns = encode_batch(&batch, &rs)?;
    println!(
        "reed-solomon: {} columns for 32-bit messages (repetition would need {})",
        rs.n(),
        32 * 5
    );
    columns[0].data = "11".parse()?;
    columns[17].data = "00".parse()?;
    anyhow::ensure!(
        decode_batch(&columns, &rs)? == batch,
        "reed-solomon failed to correct"
    );
    println!("reed-solomon corrected two corrupted columns");
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
