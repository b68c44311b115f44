use heprep_cli::config::{Lens, RenderConfig};
use heprep_core::pipeline::OutputFormat;
use heprep_core::Point3;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
    ]
}

fn point() -> impl Strategy<Value = Point3> {
    (finite(), finite(), finite()).prop_map(|(x, y, z)| Point3::new(x, y, z))
}

fn config() -> impl Strategy<Value = RenderConfig> {
    let lens = prop_oneof![finite().prop_map(Lens::Fov), finite().prop_map(Lens::Ortho)];
    let format = prop_oneof![
        Just(OutputFormat::Png),
        Just(OutputFormat::PostScript),
        Just(OutputFormat::Svg)
    ];
    let layers = proptest::collection::btree_set("[a-zA-Z0-9_ .-]{0,8}[a-z]", 0..4)
        .prop_map(|s| s.into_iter().map(|l| l.trim().to_owned()).filter(|l| !l.is_empty()).collect::<Vec<_>>())
        .prop_filter("unique after trim", |v| {
            let mut d = v.clone();
            d.sort();
            d.dedup();
            d.len() == v.len()
        });
    (
        (point(), point(), point(), lens, finite(), finite()),
        (1u32..=16384, 1u32..=16384, any::<[u8; 4]>(), format, layers),
    )
        .prop_map(|((eye, target, up, lens, near, far), (width, height, background, format, layers))| {
            RenderConfig {
                eye,
                target,
                up,
                lens,
                near,
                far,
                width,
                height,
                background,
                format,
                layers,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn text_round_trip(c in config()) {
        prop_assert_eq!(RenderConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn file_round_trip(c in config()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("render.conf");
        c.save(&path).unwrap();
        prop_assert_eq!(RenderConfig::load(&path).unwrap(), c);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "[ -~\n]{0,200}") {
        let _ = RenderConfig::parse(&text);
    }
}
