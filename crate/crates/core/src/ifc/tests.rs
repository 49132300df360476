use super::geometry::{read_geometry, wall_box, Profile};
use super::*;
use crate::config::ProjectMeta;
use crate::geom::{Polygon2D, Vec2};
use crate::opening::{Opening, OpeningKind};
use crate::slab::{Slab, SlabSource};
use crate::synth;
use crate::wall::Wall;
use crate::zone::Zone;

fn v(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

fn level(index: usize, elevation: f64) -> StoreyLevel {
    StoreyLevel {
        index,
        elevation,
        height: 2.7,
    }
}

fn one_wall() -> (Vec<StoreyLevel>, Vec<Wall>) {
    (
        vec![level(0, 0.0)],
        vec![Wall::from_axis(0, v(1.0, 2.0), v(5.0, 2.0), 0.2, 2.7, 0)],
    )
}

fn door() -> Opening {
    Opening {
        wall_ref: 0,
        x_offset: 1.0,
        width: 0.9,
        sill: 0.0,
        height: 2.1,
        kind: OpeningKind::Door,
    }
}

fn text_of(m: &IfcModel) -> String {
    to_step_string(m)
}

#[test]
fn one_storey_one_wall_counts() {
    let (storeys, walls) = one_wall();
    let m = build_model(&[], &storeys, &walls, &[], &[], &ProjectMeta::default(), &BuildOptions::default()).unwrap();
    for (ty, n) in [
        ("IFCPROJECT", 1),
        ("IFCSITE", 1),
        ("IFCBUILDING", 1),
        ("IFCBUILDINGSTOREY", 1),
        ("IFCWALL", 1),
        ("IFCOPENINGELEMENT", 0),
        ("IFCRELVOIDSELEMENT", 0),
        ("IFCRELCONTAINEDINSPATIALSTRUCTURE", 1),
    ] {
        assert_eq!(m.count(ty), n, "{ty}");
    }
    assert_eq!(element_count(&m), 1);
    let r = validate_step_str(&text_of(&m));
    assert!(r.is_valid(), "{:?}", r.violations);
}

#[test]
fn door_adds_one_opening_and_one_void() {
    let (storeys, walls) = one_wall();
    let meta = ProjectMeta::default();
    let opts = BuildOptions::default();
    let a = build_model(&[], &storeys, &walls, &[], &[], &meta, &opts).unwrap();
    let b = build_model(&[], &storeys, &walls, &[door()], &[], &meta, &opts).unwrap();
    assert_eq!(b.count("IFCOPENINGELEMENT") - a.count("IFCOPENINGELEMENT"), 1);
    assert_eq!(b.count("IFCRELVOIDSELEMENT") - a.count("IFCRELVOIDSELEMENT"), 1);
    assert_eq!(b.count("IFCWALL"), a.count("IFCWALL"));
    let r = validate_step_str(&text_of(&b));
    assert!(r.is_valid(), "{:?}", r.violations);
}

#[test]
fn unknown_host_and_storey_are_errors() {
    let (storeys, walls) = one_wall();
    let meta = ProjectMeta::default();
    let opts = BuildOptions::default();
    let mut o = door();
    o.wall_ref = 7;
    assert!(matches!(
        build_model(&[], &storeys, &walls, &[o], &[], &meta, &opts),
        Err(crate::Error::UnknownWall(_))
    ));
    let mut w = walls.clone();
    w[0].storey_index = 3;
    assert!(build_model(&[], &storeys, &w, &[], &[], &meta, &opts).is_err());
    let bad = Zone {
        boundary: Polygon2D::new(vec![v(0.0, 0.0), v(1.0, 0.0)]),
        storey_index: 0,
        area: 0.0,
        height: 2.7,
        name: "x".into(),
    };
    assert!(matches!(
        build_model(&[], &storeys, &walls, &[], &[bad], &meta, &opts),
        Err(crate::Error::DegenerateZone(_))
    ));
}

#[test]
fn empty_model_is_valid() {
    let m = build_model(&[], &[], &[], &[], &[], &ProjectMeta::default(), &BuildOptions::default()).unwrap();
    let t = text_of(&m);
    assert!(t.starts_with(ENVELOPE_START));
    assert!(t.trim_end().ends_with(ENVELOPE_END));
    assert_eq!(element_count(&m), 0);
    let r = validate_step_str(&t);
    assert!(r.is_valid(), "{:?}", r.violations);
}

#[test]
fn truth_model_counts_and_validates() {
    let (_, truth) = synth::generate(&synth::orthogonal_two_storey()).unwrap();
    let e = truth.elements();
    let m = build_model(
        &e.slabs,
        &e.storeys,
        &e.walls,
        &e.openings,
        &e.zones,
        &ProjectMeta::default(),
        &BuildOptions::default(),
    )
    .unwrap();
    assert_eq!(m.count("IFCSLAB"), e.slabs.len());
    assert_eq!(m.count("IFCWALL"), e.walls.len());
    assert_eq!(m.count("IFCOPENINGELEMENT"), e.openings.len());
    assert_eq!(m.count("IFCSPACE"), e.zones.len());
    assert_eq!(m.count("IFCBUILDINGSTOREY"), e.storeys.len());
    assert_eq!(
        element_count(&m),
        e.slabs.len() + e.walls.len() + e.openings.len() + e.zones.len()
    );
    let r = validate_step_str(&text_of(&m));
    assert!(r.is_valid(), "{:?}", r.violations);
    assert_eq!(r.entity_count, m.entities.len());
}

fn corrupt(text: &str, from: &str, to: &str) -> String {
    assert!(text.contains(from), "{from} not in text");
    text.replacen(from, to, 1)
}

#[test]
fn injected_faults_are_reported() {
    let (storeys, walls) = one_wall();
    let m = build_model(&[], &storeys, &walls, &[door()], &[], &ProjectMeta::default(), &BuildOptions::default())
        .unwrap();
    let t = text_of(&m);

    // dangling reference: point the wall's placement at a missing id
    let wall_id = m.ids_of("IFCWALL")[0];
    let pl = m.entities[&wall_id].arg(5).as_ref_id().unwrap();
    let line = t.lines().find(|l| l.starts_with(&format!("#{wall_id}="))).unwrap();
    let broken = corrupt(&t, line, &line.replace(&format!(",#{pl},"), ",#999,"));
    let r = validate_step_str(&broken);
    assert_eq!(r.count(ViolationKind::UnresolvedReference), 1, "{:?}", r.violations);
    assert!(r.violations.iter().any(|v| v.message.contains("#999") && v.entity == Some(wall_id)));

    // a second project
    let project = m.ids_of("IFCPROJECT")[0];
    let pline = t.lines().find(|l| l.starts_with(&format!("#{project}="))).unwrap();
    let extra = pline.replacen(&format!("#{project}="), "#9000=", 1);
    let doubled = corrupt(&t, "ENDSEC;\nEND-ISO", &format!("{extra}\nENDSEC;\nEND-ISO"));
    let r = validate_step_str(&doubled);
    assert_eq!(r.count(ViolationKind::ProjectCount), 1, "{:?}", r.violations);

    // no project at all
    let gone = corrupt(&t, "IFCPROJECT(", "IFCPROJECTLIBRARY(");
    let r = validate_step_str(&gone);
    assert!(r.violations.iter().any(|v| v.message == "missing IfcProject"));
    assert!(r.count(ViolationKind::Containment) > 0);

    // orphaned opening
    let voids = m.ids_of("IFCRELVOIDSELEMENT")[0];
    let vline = t.lines().find(|l| l.starts_with(&format!("#{voids}="))).unwrap();
    let r = validate_step_str(&corrupt(&t, &format!("{vline}\n"), ""));
    assert_eq!(r.count(ViolationKind::OpeningRelation), 1);
    assert_eq!(r.count(ViolationKind::Containment), 1);

    // duplicate id and broken envelope
    let r = validate_step_str(&corrupt(&t, "ENDSEC;\nEND-ISO", &format!("{line}\nENDSEC;\nEND-ISO")));
    assert_eq!(r.count(ViolationKind::DuplicateId), 1);
    let r = validate_step_str(t.trim_end().trim_end_matches(ENVELOPE_END));
    assert!(r.count(ViolationKind::Envelope) >= 1);
    let r = validate_step_str(&corrupt(&t, "'IFC4'", "'IFC2X3'"));
    assert_eq!(r.count(ViolationKind::Schema), 1);
    let r = validate_step_str(&corrupt(&t, "IFCWALL(", "IFCWALL(("));
    assert_eq!(r.count(ViolationKind::Syntax), 1);
}

#[test]
fn seeded_output_is_byte_identical() {
    let (_, truth) = synth::generate(&synth::wing_two_storey()).unwrap();
    let e = truth.elements();
    let build = |seed| {
        let opts = BuildOptions {
            guids: GuidMode::Seeded(seed),
            ..BuildOptions::default()
        };
        text_of(&build_model(&e.slabs, &e.storeys, &e.walls, &e.openings, &e.zones, &ProjectMeta::default(), &opts).unwrap())
    };
    assert_eq!(build(3), build(3));
    assert_ne!(build(3), build(4));
    let random = BuildOptions {
        guids: GuidMode::Random,
        ..BuildOptions::default()
    };
    let r1 = build_model(&e.slabs, &e.storeys, &e.walls, &[], &[], &ProjectMeta::default(), &random).unwrap();
    let r2 = build_model(&e.slabs, &e.storeys, &e.walls, &[], &[], &ProjectMeta::default(), &random).unwrap();
    assert_ne!(text_of(&r1), text_of(&r2));
}

#[test]
fn guids_are_unique_and_well_formed() {
    let (_, truth) = synth::generate(&synth::orthogonal_two_storey()).unwrap();
    let e = truth.elements();
    let m = build_model(&e.slabs, &e.storeys, &e.walls, &e.openings, &e.zones, &ProjectMeta::default(), &BuildOptions::default())
        .unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for ent in m.entities.values() {
        if let Some(Value::Str(g)) = ent.args.first() {
            if ent.ty.starts_with("IFCREL") || ent.ty == "IFCWALL" || ent.ty == "IFCPROJECT" || ent.ty == "IFCSPACE" {
                assert!(decode_guid(g).is_some(), "{g}");
                assert!(seen.insert(g.clone()), "repeated {g}");
            }
        }
    }
}

#[test]
fn header_carries_author_and_metadata() {
    let meta = ProjectMeta {
        author_name: "A".into(),
        author_surname: "B".into(),
        organization: "Org".into(),
        project_name: "P".into(),
        version: "v2".into(),
        building_phase: "survey".into(),
        site_latitude: 45.5,
        ..ProjectMeta::default()
    };
    let m = build_model(&[], &[], &[], &[], &[], &meta, &BuildOptions::default()).unwrap();
    let t = text_of(&m);
    let file_name = t.lines().find(|l| l.starts_with("FILE_NAME")).unwrap();
    assert!(file_name.contains("('A B')"), "{file_name}");
    assert!(file_name.contains("('Org')"));
    assert!(file_name.contains("'1970-01-01T00:00:00'"));
    let p = parse_step(&t).unwrap();
    let proj = p.get(p.ids_of("IFCPROJECT")[0]).unwrap();
    assert_eq!(proj.arg(2).as_str(), Some("P"));
    assert_eq!(proj.arg(3).as_str(), Some("v2"));
    assert_eq!(proj.arg(6).as_str(), Some("survey"));
    let site = p.get(p.ids_of("IFCSITE")[0]).unwrap();
    let lat: Vec<f64> = site.arg(9).as_list().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(lat, vec![45.0, 30.0, 0.0, 0.0]);
}

#[test]
fn compound_angles_and_timestamps() {
    assert_eq!(compound_angle(0.0), [0, 0, 0, 0]);
    assert_eq!(compound_angle(-12.5), [-12, -30, 0, 0]);
    assert_eq!(compound_angle(1.0 + 1.0 / 3600.0 + 0.25 / 3600.0), [1, 0, 1, 250_000]);
    assert_eq!(iso_timestamp(0), "1970-01-01T00:00:00");
    assert_eq!(iso_timestamp(951_782_400), "2000-02-29T00:00:00");
    assert_eq!(iso_timestamp(1_700_000_000), "2023-11-14T22:13:20");
}

#[test]
fn geometry_reads_back_within_tolerance() {
    let storeys = vec![level(0, 0.0), level(1, 3.0)];
    let walls = vec![
        Wall::from_axis(0, v(0.0, 0.0), v(6.0, 0.0), 0.3, 2.7, 0),
        Wall::from_axis(1, v(6.0, 0.0), v(8.5, 4.330127018922193), 0.25, 2.7, 0),
        Wall::from_axis(2, v(-1.5, 7.0), v(-1.5, 2.0), 0.12, 2.7, 1),
    ];
    let openings = vec![
        Opening {
            wall_ref: 1,
            x_offset: 0.7,
            width: 1.2,
            sill: 0.9,
            height: 1.3,
            kind: OpeningKind::Window,
        },
        Opening {
            wall_ref: 2,
            ..door()
        },
    ];
    let footprint = Polygon2D::new(vec![v(-2.0, -1.0), v(9.0, -1.0), v(9.0, 8.0), v(-2.0, 8.0)]);
    let slabs = vec![
        Slab {
            footprint: footprint.clone(),
            z_bottom: -0.3,
            thickness: 0.3,
            source: SlabSource::Paired,
        },
        Slab {
            footprint: footprint.clone(),
            z_bottom: 2.7,
            thickness: 0.3,
            source: SlabSource::Paired,
        },
    ];
    let zone = Zone {
        boundary: Polygon2D::new(vec![v(0.5, 0.5), v(4.0, 0.5), v(4.0, 3.0), v(0.5, 3.0)]),
        storey_index: 1,
        area: 8.75,
        height: 2.7,
        name: "Zone 1.1".into(),
    };
    let m = build_model(&slabs, &storeys, &walls, &openings, &[zone.clone()], &ProjectMeta::default(), &BuildOptions::default())
        .unwrap();
    let p = parse_step(&text_of(&m)).unwrap();
    let g = read_geometry(&p).unwrap();
    let tol = 1e-6;
    let close = |a: [f64; 3], b: [f64; 3]| (0..3).all(|i| (a[i] - b[i]).abs() < tol);

    let boxes: Vec<_> = g.of_type("IFCWALL").map(|e| wall_box(e).unwrap()).collect();
    assert_eq!(boxes.len(), 3);
    for (w, b) in walls.iter().zip(&boxes) {
        let z = storeys[w.storey_index].elevation;
        assert!(close(b.start, [w.axis_start.x, w.axis_start.y, z]), "{b:?}");
        assert!(close(b.end, [w.axis_end.x, w.axis_end.y, z]), "{b:?}");
        assert!((b.thickness - w.thickness).abs() < tol);
        assert!((b.height - w.height).abs() < tol);
    }

    let ops: Vec<_> = g.of_type("IFCOPENINGELEMENT").collect();
    assert_eq!(ops.len(), 2);
    for (o, e) in openings.iter().zip(&ops) {
        let w = &walls[o.wall_ref];
        let z = storeys[w.storey_index].elevation;
        let c = o.center(w, z);
        let Profile::Rect { center, xdim, ydim, .. } = e.profile else { panic!("rect expected") };
        let mid = e.frame.apply([center.x, center.y, e.depth / 2.0]);
        assert!(close(mid, c), "{mid:?} vs {c:?}");
        assert!((xdim - o.width).abs() < tol);
        assert!((ydim - w.thickness - 2.0 * OPENING_OVERCUT).abs() < tol);
        assert!((e.depth - o.height).abs() < tol);
    }
    assert_eq!(g.voids.len(), 2);

    let sl: Vec<_> = g.of_type("IFCSLAB").collect();
    for (s, e) in slabs.iter().zip(&sl) {
        let Profile::Poly(pts) = &e.profile else { panic!("polygon expected") };
        assert_eq!(pts.len(), 4);
        for (a, b) in pts.iter().zip(&s.footprint.vertices) {
            assert!(close(e.frame.apply([a.x, a.y, 0.0]), [b.x, b.y, s.z_bottom]));
        }
        assert!((e.depth - s.thickness).abs() < tol);
    }
    let sp: Vec<_> = g.of_type("IFCSPACE").collect();
    assert_eq!(sp.len(), 1);
    let Profile::Poly(pts) = &sp[0].profile else { panic!("polygon expected") };
    for (a, b) in pts.iter().zip(&zone.boundary.vertices) {
        assert!(close(sp[0].frame.apply([a.x, a.y, 0.0]), [b.x, b.y, 3.0]));
    }
}

#[test]
fn one_wall_matches_golden_file() {
    let (storeys, walls) = one_wall();
    let m = build_model(&[], &storeys, &walls, &[door()], &[], &ProjectMeta::default(), &BuildOptions::default())
        .unwrap();
    let text = text_of(&m).replace(env!("CARGO_PKG_VERSION"), "VERSION");
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/one_wall.ifc");
    if std::env::var_os("POINTBIM_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden file; rerun with POINTBIM_BLESS=1 to create it");
    assert_eq!(text, golden);
}
