//! Builds fused encoder inputs: word embedding plus position, with the
//! POS-tag code appended.

use augformer::corpus::TagSet;
use augformer::encoding::{encode_pos_tag, fuse_inputs, EncodingConfig, FusionConfig, FusionTables, DEFAULT_BASE};

fn main() -> augformer::Result<()> {
    let tags = TagSet::penn();
    let fusion = FusionConfig { d_emb: 8, d_post: 4, use_mvpe: true, tag_step_k: 1 };
    let tables = FusionTables::build(fusion, EncodingConfig::new(8, 10).with_step(273), tags.len() + 1)?;
    println!("fused width {} = {} + {}", fusion.fused_dim(), fusion.d_emb, fusion.d_post);

    let embedding = vec![0.0; 8];
    for (pos, tag) in ["DT", "JJ", "NN", "VBZ"].iter().enumerate() {
        let id = tags.id(tag).expect("Penn tag");
        let fused = fuse_inputs(&embedding, pos, id, &tables)?;
        println!("{pos} {tag:<4} {:>7.3?}", fused);
    }

    let code = encode_pos_tag(tags.neutral_id(), tags.len() + 1, 4, DEFAULT_BASE, 1)?;
    println!("neutral tag code {code:.3?}");
    Ok(())
}
