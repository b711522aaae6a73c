use proptest::prelude::*;

use keyactor::features::{
    parse_dataset, write_dataset_to, BoundingBox, Clip, Dataset, DatasetHeader, Detection, Frame, Label,
};
use keyactor::model::{init_params, Mode, ModelConfig};
use keyactor::training::{decode, Checkpoint, TrainConfig};
use keyactor::Error;

const D_FRAME: usize = 3;
const D_APP: usize = 2;

fn finite() -> impl Strategy<Value = f32> {
    prop_oneof![
        -1e30f32..1e30,
        -1.0f32..1.0,
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE),
        Just(f32::MAX),
    ]
}

fn detection() -> impl Strategy<Value = Detection> {
    (
        0.0f32..0.5,
        0.0f32..0.5,
        0.01f32..0.5,
        0.01f32..0.5,
        prop::collection::vec(finite(), D_APP),
        0.0f32..=1.0,
        prop::option::of(0u32..50),
        prop::option::of(0u32..10),
    )
        .prop_map(
            |(x, y, w, h, appearance, confidence, track_id, gt_player_id)| Detection {
                bbox: BoundingBox::new(x, y, x + w, y + h).unwrap(),
                appearance,
                confidence,
                track_id,
                gt_player_id,
            },
        )
}

fn clip() -> impl Strategy<Value = Clip> {
    (
        "[a-z0-9_-]{1,12}",
        prop_oneof![Just(Label::Negative), (0usize..4).prop_map(Label::Event)],
        prop::collection::vec(
            (
                prop::collection::vec(finite(), D_FRAME),
                prop::collection::vec(detection(), 0..4),
                prop::option::of((0.0f32..1.0, 0.0f32..1.0)),
            ),
            0..5,
        ),
    )
        .prop_map(|(clip_id, label, frames)| Clip {
            clip_id,
            label,
            fps: 6.0,
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(index, (feature, detections, ball))| Frame {
                    index,
                    feature,
                    detections,
                    ball: ball.map(|(x, y)| [x, y]),
                })
                .collect(),
        })
}

fn dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec(clip(), 0..5).prop_map(|clips| Dataset {
        header: DatasetHeader {
            version: 1,
            d_frame: D_FRAME,
            d_app: D_APP,
            d_sp: 4,
            k: 4,
            fps: 6.0,
        },
        clips,
    })
}

fn to_bytes(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    write_dataset_to(d, &mut out).unwrap();
    out
}

fn float_bits(d: &Dataset) -> Vec<u32> {
    let mut out = Vec::new();
    for f in d.clips.iter().flat_map(|c| &c.frames) {
        out.extend(f.feature.iter().map(|v| v.to_bits()));
        for det in &f.detections {
            out.extend(det.appearance.iter().map(|v| v.to_bits()));
        }
    }
    out
}

fn checkpoint(seed: u64) -> Checkpoint {
    let model = ModelConfig {
        d_frame: 3,
        d_app: 2,
        spatial_levels: vec![1],
        hidden_dim: 2,
        embed_dim: 3,
        attn_dim: 2,
        num_classes: 2,
        mode: Mode::AttnTrack,
        ..ModelConfig::default()
    };
    Checkpoint {
        params: init_params(&model, seed).unwrap(),
        model,
        train: TrainConfig::default(),
        step: 7,
        history: Vec::new(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trip_is_bit_exact(d in dataset()) {
        let bytes = to_bytes(&d);
        let back = parse_dataset(&bytes[..]).unwrap();
        prop_assert_eq!(float_bits(&back), float_bits(&d));
        prop_assert_eq!(&back, &d);
        prop_assert_eq!(to_bytes(&back), bytes);
    }

    #[test]
    fn damaged_dataset_never_panics(d in dataset(), edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..6)) {
        let mut bytes = to_bytes(&d);
        for (i, b) in edits {
            let i = i.index(bytes.len());
            bytes[i] = b;
        }
        match parse_dataset(&bytes[..]) {
            Ok(_) | Err(Error::Parse { .. } | Error::Validation(_)) => {}
            Err(e) => prop_assert!(false, "unexpected error kind: {e}"),
        }
    }

    #[test]
    fn truncated_dataset_line_is_a_parse_error(d in dataset(), cut in any::<prop::sample::Index>()) {
        let bytes = to_bytes(&d);
        let cut = cut.index(bytes.len());
        // a cut that leaves only whole lines is a valid shorter file
        prop_assume!(cut > 0 && bytes[cut - 1] != b'\n' && bytes[cut] != b'\n');
        let parsed = parse_dataset(&bytes[..cut]);
        prop_assert!(matches!(parsed, Err(Error::Parse { .. })), "{:?}", parsed.map(|d| d.clips.len()));
    }

    #[test]
    fn checkpoint_blob_damage_is_typed(seed in 0u64..1000, cut in any::<prop::sample::Index>(), flip in any::<prop::sample::Index>()) {
        let ck = checkpoint(seed);
        let manifest = serde_json::to_string(&ck.manifest()).unwrap();
        let blob = ck.blob();
        prop_assert_eq!(&decode(&manifest, &blob).unwrap(), &ck);

        let cut = cut.index(blob.len());
        let truncated = matches!(decode(&manifest, &blob[..cut]), Err(Error::Truncated { .. }));
        prop_assert!(truncated);

        let mut m = manifest.clone().into_bytes();
        let i = flip.index(m.len());
        m[i] = b'#';
        prop_assert!(decode(std::str::from_utf8(&m).unwrap(), &blob).is_err());
    }
}

#[test]
fn checkpoint_from_another_version_is_refused() {
    let ck = checkpoint(1);
    let mut manifest = ck.manifest();
    manifest.version += 1;
    let text = serde_json::to_string(&manifest).unwrap();
    assert!(matches!(decode(&text, &ck.blob()), Err(Error::VersionMismatch { .. })));
}
