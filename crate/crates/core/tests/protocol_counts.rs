use fsbench_core::protocols::{
    builtin_protocol, builtin_protocols, validate_mapping, ClassInventory, LabelMapping,
    ProtocolKind,
};
use fsbench_core::store::{DatasetManifest, ExtractionInfo};
use fsbench_core::EmbeddingDataset;
use proptest::prelude::*;

/// Dataset with the manifest's class sizes and distinct 2-d vectors.
fn from_manifest(m: &DatasetManifest) -> EmbeddingDataset {
    let mut labels = Vec::new();
    let mut vectors = Vec::new();
    for (c, class) in m.classes.iter().enumerate() {
        for i in 0..class.count {
            labels.push(c as u32);
            vectors.extend([c as f32 + 1.0, i as f32 * 0.5 - 3.0]);
        }
    }
    EmbeddingDataset::new(
        &m.dataset,
        "fixture",
        2,
        m.class_names(),
        labels,
        vectors,
        ExtractionInfo::default(),
    )
    .unwrap()
}

fn manifests() -> [DatasetManifest; 3] {
    [
        DatasetManifest::msld_v1(),
        DatasetManifest::msid(),
        DatasetManifest::msld_v2(),
    ]
}

#[test]
fn published_totals() {
    let [v1, msid, v2] = manifests();
    assert_eq!(v1.total(), 228);
    assert_eq!(msid.total(), 770);
    assert_eq!(v2.total(), 755);
}

#[test]
fn binary_counts_on_every_dataset() {
    let mapping = builtin_protocol("cross-binary").unwrap()[0].mapping.clone();
    let expected = [
        ("MSLDv1", 102, 126),
        ("MSID", 279, 491),
        ("MSLDv2", 284, 471),
    ];
    for (m, (name, mpox, others)) in manifests().iter().zip(expected) {
        assert_eq!(m.dataset, name);
        let remapped = from_manifest(m).remap_labels(&mapping).unwrap();
        assert_eq!(remapped.class_names(), ["Mpox", "Others"]);
        assert_eq!(remapped.class_counts(), vec![mpox, others]);
        assert_eq!(remapped.count(), m.total());
    }
}

#[test]
fn overlap_keeps_528_of_msld_v2() {
    let mapping = builtin_protocol("cross-overlap4").unwrap()[0]
        .mapping
        .clone();
    let remapped = from_manifest(&DatasetManifest::msld_v2())
        .remap_labels(&mapping)
        .unwrap();
    assert_eq!(remapped.class_counts(), vec![284, 75, 55, 114]);
    assert_eq!(remapped.count(), 528);
    let msid = from_manifest(&DatasetManifest::msid())
        .remap_labels(&mapping)
        .unwrap();
    assert_eq!(msid.class_counts(), vec![279, 107, 91, 293]);
}

#[test]
fn remap_preserves_vectors_and_order() {
    let ds = from_manifest(&DatasetManifest::msld_v2());
    let mapping = builtin_protocol("cross-overlap4").unwrap()[0]
        .mapping
        .clone();
    let remapped = ds.remap_labels(&mapping).unwrap();
    let kept: Vec<usize> = (0..ds.count())
        .filter(|&i| !["Cowpox", "HFMD"].contains(&ds.class_names()[ds.label(i)].as_str()))
        .collect();
    assert_eq!(kept.len(), remapped.count());
    for (j, &i) in kept.iter().enumerate() {
        assert_eq!(remapped.row(j), ds.row(i));
        assert_eq!(
            remapped.class_names()[remapped.label(j)],
            ds.class_names()[ds.label(i)]
        );
    }
}

#[test]
fn overlap_on_msld_v1_is_a_mapping_error() {
    let mapping = builtin_protocol("cross-overlap4").unwrap()[0]
        .mapping
        .clone();
    let err = validate_mapping(
        &mapping,
        &[ClassInventory::from(&DatasetManifest::msld_v1())],
        10,
    )
    .unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("MSLDv1") && msg.contains("Chickenpox"),
        "{msg}"
    );
}

#[test]
fn builtins_validate_on_loaded_datasets() {
    let [_, msid, v2] = manifests();
    let data = [from_manifest(&msid), from_manifest(&v2)];
    let grids = builtin_protocols();
    assert_eq!(grids.len(), 7);
    let kinds: Vec<ProtocolKind> = grids.iter().map(|g| g.kind).collect();
    assert_eq!(
        kinds,
        [
            ProtocolKind::InDomain,
            ProtocolKind::InDomain,
            ProtocolKind::Mismatch,
            ProtocolKind::Overlap,
            ProtocolKind::Overlap,
            ProtocolKind::Binary,
            ProtocolKind::Binary
        ]
    );
    for g in &grids {
        let invs: Vec<ClassInventory> = data
            .iter()
            .filter(|d| {
                d.dataset_name() == g.support_dataset || d.dataset_name() == g.query_dataset
            })
            .map(ClassInventory::from)
            .collect();
        let checked = validate_mapping(&g.mapping, &invs, g.max_shot()).unwrap();
        assert_eq!(checked.coverage.len(), invs.len());
    }
    let mismatch = &grids[2];
    let checked =
        validate_mapping(&mismatch.mapping, &[ClassInventory::from(&data[0])], 10).unwrap();
    assert_eq!(checked.coverage[0].count("Cowpox"), Some(0));
    assert_eq!(checked.coverage[0].count("HFMD"), Some(0));
}

proptest! {
    #[test]
    fn identity_refinement_is_idempotent(pick in 0usize..7) {
        let g = &builtin_protocols()[pick];
        let [_, msid, v2] = manifests();
        for m in [msid, v2] {
            if let Ok(once) = from_manifest(&m).remap_labels(&g.mapping) {
                let identity = LabelMapping::identity(once.class_names());
                let twice = once.remap_labels(&identity).unwrap();
                prop_assert_eq!(&twice, &once);
                let thrice = twice.remap_labels(&g.mapping).unwrap();
                prop_assert_eq!(thrice, once);
            }
        }
    }
}
