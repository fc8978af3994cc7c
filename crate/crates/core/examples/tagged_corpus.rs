//! Reads a vertical tagged corpus, builds vocabularies and encodes it.

use std::io::Cursor;

use augformer::corpus::{build_vocab, read_tagged_corpus, write_tagged_corpus, TagSet};

const TEXT: &str = "the\tDT\nold\tJJ\ncat\tNN\nsleeps\tVBZ\n.\t.\n\nthe\tDT\ndog\tNN\nbarks\tVBZ\n.\t.\n\n";

fn main() -> augformer::Result<()> {
    let tags = TagSet::penn();
    let sentences = read_tagged_corpus(Cursor::new(TEXT), &tags)?;
    let lines: Vec<String> = sentences.iter().map(|s| s.tokens().join(" ")).collect();
    let vocab = build_vocab(&lines, 1, None)?;
    println!("{} sentences, vocabulary {:?}", sentences.len(), vocab.tokens());

    for s in &sentences {
        let ids = s.encode(&vocab);
        let names: Vec<&str> = s.tags().iter().map(|&t| tags.name(t).unwrap_or("?")).collect();
        println!("{:?} {:?}", ids.tokens(), names);
    }

    let mut out = Vec::new();
    write_tagged_corpus(&mut out, &sentences, &tags)?;
    assert_eq!(String::from_utf8(out).expect("utf-8"), TEXT);
    println!("round trip ok");
    Ok(())
}
