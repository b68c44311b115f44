use proptest::prelude::*;

use heprep_core::xmlio::{self, XmlError};
use heprep_testkit::{gen, mutate, read_data, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn round_trip(seed in any::<u64>(), compress in any::<bool>()) {
        let doc = gen::document(&mut rng(seed));
        let bytes = xmlio::serialize(&doc, compress).unwrap();
        prop_assert_eq!(xmlio::is_gzip(&bytes), compress);
        prop_assert_eq!(xmlio::parse(&bytes).unwrap(), doc);
    }

    #[test]
    fn serialization_is_a_fixed_point(seed in any::<u64>()) {
        let doc = gen::document(&mut rng(seed));
        let once = xmlio::serialize(&doc, false).unwrap();
        let twice = xmlio::serialize(&xmlio::parse(&once).unwrap(), false).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn compression_is_transparent(seed in any::<u64>()) {
        let doc = gen::document(&mut rng(seed));
        let plain = xmlio::serialize(&doc, false).unwrap();
        let packed = xmlio::serialize(&doc, true).unwrap();
        prop_assert_eq!(xmlio::parse(&plain).unwrap(), xmlio::parse(&packed).unwrap());
        prop_assert_eq!(xmlio::parse(&xmlio::gzip(&plain)).unwrap(), doc);
        let (s1, s2) = (xmlio::stats(&plain).unwrap(), xmlio::stats(&packed).unwrap());
        prop_assert_eq!(
            (s1.type_count, s1.instance_count, s1.point_count),
            (s2.type_count, s2.instance_count, s2.point_count)
        );
        prop_assert!(!s1.compressed && s2.compressed);
    }

    #[test]
    fn mutated_input_never_panics(seed in any::<u64>()) {
        let mut r = rng(seed);
        let base = match seed % 3 {
            0 => read_data(heprep_testkit::MINIMAL),
            1 => xmlio::serialize(&gen::document(&mut r), false).unwrap(),
            _ => xmlio::serialize(&gen::document(&mut r), true).unwrap(),
        };
        let input = mutate::mutate(&mut r, &base);
        match xmlio::parse(&input) {
            Ok(doc) => prop_assert!(doc.validate().is_empty()),
            Err(e) => prop_assert!(!e.to_string().is_empty()),
        }
    }
}

#[test]
fn truncated_gzip_is_a_compression_error() {
    let packed = xmlio::serialize(&heprep_testkit::glast::document(), true).unwrap();
    let err = xmlio::parse(&packed[..packed.len() / 2]).unwrap_err();
    assert!(matches!(err, XmlError::Compression(_)), "{err:?}");
}

#[test]
fn minimal_fixture_stats() {
    let bytes = read_data(heprep_testkit::MINIMAL);
    let s = xmlio::stats(&bytes).unwrap();
    assert_eq!((s.type_count, s.instance_count, s.point_count), (1, 1, 2));
    assert_eq!(s.byte_size, bytes.len());
}

#[test]
fn deep_nesting_is_rejected_not_overflowed() {
    let depth = xmlio::MAX_DEPTH + 10;
    let mut xml = String::from(r#"<heprep><typetree name="T" version=""><type name="A"/></typetree><instancetree name="E" version="" typetreename="T">"#);
    for _ in 0..depth {
        xml.push_str(r#"<instance type="A">"#);
    }
    for _ in 0..depth {
        xml.push_str("</instance>");
    }
    xml.push_str("</instancetree></heprep>");
    assert!(xmlio::parse(xml.as_bytes()).is_err());
}
