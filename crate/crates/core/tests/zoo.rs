use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use ucreg_core::chart::ChartSpec;
use ucreg_core::correlation::{build_panorama as correlate, rank_attributes, CorrelationPanorama, LabelFocus};
use ucreg_core::data::{decompose_target, Dataset, LoadOptions};
use ucreg_core::logit::FitConfig;
use ucreg_core::query::{batch_query, query, QuerySession};
use ucreg_core::radviz::{layout_attributes, place_anchors, LayoutFocus};
use ucreg_core::store::{build_panorama, BuildOptions, PanoramaFile};

fn zoo() -> Dataset {
    let opts = LoadOptions {
        id_column: Some("name".into()),
        ..LoadOptions::default()
    };
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/zoo.csv");
    Dataset::load(std::fs::File::open(path).unwrap(), &opts).unwrap()
}

fn panorama(ds: &Dataset) -> CorrelationPanorama {
    let dec = decompose_target(ds, "type").unwrap();
    correlate(ds, &dec, &HashSet::new()).unwrap()
}

fn charts() -> Vec<ChartSpec> {
    vec![
        ChartSpec {
            title: "fish".into(),
            target: "type".into(),
            labels: vec!["fish".into()],
            attributes: vec!["fins".into(), "breathes".into(), "legs".into()],
        },
        ChartSpec {
            title: "backbone".into(),
            target: "type".into(),
            labels: vec!["mammal".into(), "bird".into(), "reptile".into()],
            attributes: vec!["eggs".into(), "toothed".into(), "legs".into()],
        },
    ]
}

#[test]
fn labels_follow_first_appearance() {
    let p = panorama(&zoo());
    assert_eq!(
        p.labels,
        ["mammal", "fish", "bird", "invertebrate", "insect", "amphibian", "reptile"]
    );
    assert_eq!(p.attributes.len(), 16);
}

#[test]
fn fish_focus_ranks_fins_first() {
    let p = panorama(&zoo());
    let fish = p.labels.iter().position(|l| l == "fish").unwrap();
    let ranked = rank_attributes(&p, LabelFocus::Label(fish)).unwrap();
    let top: Vec<&str> = ranked.iter().take(3).map(|r| r.attribute.as_str()).collect();
    assert_eq!(top, ["fins", "breathes", "legs"]);
    assert!((ranked[0].score - 0.854).abs() < 1e-3);
    assert_eq!(p.labels[p.dominant_label[p.attribute_index("legs").unwrap()]], "fish");
}

#[test]
fn fish_focus_layout_draws_fins_largest() {
    let ds = zoo();
    let p = panorama(&ds);
    let ring = place_anchors(&p.labels, &vec![true; p.labels.len()]).unwrap();
    let focus = LayoutFocus::parse("fish", &p, &ds).unwrap();
    let points = layout_attributes(&p, &ring, focus, 1.0).unwrap();
    let largest = points.iter().max_by(|a, b| a.size.total_cmp(&b.size)).unwrap();
    assert_eq!(largest.id, "fins");
    // Perfect correlates sit closest to their anchor.
    let feathers = points.iter().find(|pt| pt.id == "feathers").unwrap();
    let bird = ring.anchor_position(2).unwrap();
    let others = points.iter().filter(|pt| pt.id != "feathers");
    let d = |x: f64, y: f64| (x - bird.0).hypot(y - bird.1);
    assert!(others.into_iter().all(|pt| d(pt.x, pt.y) > d(feathers.x, feathers.y)));
}

#[test]
fn hidden_label_drops_out_of_layout() {
    let ds = zoo();
    let p = panorama(&ds);
    let mut visible = vec![true; p.labels.len()];
    visible[0] = false;
    let ring = place_anchors(&p.labels, &visible).unwrap();
    let points = layout_attributes(&p, &ring, LayoutFocus::Global, 1.0).unwrap();
    let milk = points.iter().find(|pt| pt.id == "milk").unwrap();
    // milk correlates with every label; without mammal it is pulled elsewhere.
    assert!(milk.x.hypot(milk.y) < 1.0);
}

#[test]
fn query_matches_probability_matrix() {
    let ds = zoo();
    let pf = build_panorama(&ds, &charts(), &FitConfig::default(), &BuildOptions::default()).unwrap();
    for chart in &pf.charts {
        let m = chart.model.probability_matrix(&ds).unwrap();
        assert_eq!(m.excluded, 0);
        for (row, probs) in m.rows.iter().zip(&m.probabilities) {
            let profile: BTreeMap<String, f64> = pf
                .attributes()
                .into_iter()
                .map(|a| {
                    let v = ds.attribute(&a).unwrap()[*row].unwrap();
                    (a, v)
                })
                .collect();
            let q = query(&pf, &profile).unwrap();
            let got = &q.iter().find(|c| c.title == chart.spec.title).unwrap().probabilities;
            assert_eq!(got, probs);
        }
    }
}

#[test]
fn session_streamgraph_stacks_to_one() {
    let ds = zoo();
    let pf = Arc::new(build_panorama(&ds, &charts(), &FitConfig::default(), &BuildOptions::default()).unwrap());
    let mut session = QuerySession::new(pf.clone());
    let mut profile = pf.default_profile();
    for legs in [0.0, 2.0, 4.0, 6.0] {
        profile.insert("legs".into(), legs);
        session.submit_state(profile.clone()).unwrap();
    }
    let snap = session.snapshot();
    assert_eq!(snap.history.len(), 4);
    assert_eq!(snap.current.len(), 2);
    for s in &snap.streamgraphs {
        for state in 0..4 {
            assert_eq!(s.layers[0].bands[state].0, 0.0);
            for pair in s.layers.windows(2) {
                assert_eq!(pair[0].bands[state].1, pair[1].bands[state].0);
            }
            assert!((s.layers.last().unwrap().bands[state].1 - 1.0).abs() < 1e-12);
        }
    }
    let csv = session.streamgraph_csv();
    // header + 4 states x (2 + 3) labels
    assert_eq!(csv.lines().count(), 1 + 4 * 5);
    assert!(csv.starts_with("chart,state,label,probability,y0,y1\n"));

    // A failing submission leaves the session untouched.
    profile.remove("legs");
    assert!(session.submit_state(profile).is_err());
    assert_eq!(session.history().len(), 4);
}

#[test]
fn batch_scores_every_row_after_round_trip() {
    let ds = zoo();
    let pf = build_panorama(&ds, &charts(), &FitConfig::default(), &BuildOptions::default()).unwrap();
    let pf = PanoramaFile::load(&pf.save()).unwrap();
    let result = batch_query(&pf, &ds, Some("type"), 1.0).unwrap();
    assert_eq!(result.rows, 101);
    let backbone = &result.charts[1];
    assert_eq!(backbone.probabilities.len(), 101);
    // Labels outside the chart extend the legend.
    assert_eq!(&backbone.layout.color_legend[..3], ["mammal", "bird", "reptile"]);
    assert!(backbone.layout.color_legend.contains(&"fish".to_string()));
    let csv = result.to_csv(ds.row_ids());
    let header = csv.lines().next().unwrap();
    assert_eq!(header, "row_id,fish:fish,fish:not fish,backbone:mammal,backbone:bird,backbone:reptile");
    assert_eq!(csv.lines().count(), 102);
}

#[test]
fn batch_of_one_row_matches_query_and_empty_table_is_empty() {
    let ds = zoo();
    let pf = build_panorama(&ds, &charts(), &FitConfig::default(), &BuildOptions::default()).unwrap();
    let one = ds.select_rows(&[17]);
    let result = batch_query(&pf, &one, None, 1.0).unwrap();
    let profile: BTreeMap<String, f64> = pf
        .attributes()
        .into_iter()
        .map(|a| {
            let v = one.attribute(&a).unwrap()[0].unwrap();
            (a, v)
        })
        .collect();
    for (b, q) in result.charts.iter().zip(query(&pf, &profile).unwrap()) {
        assert_eq!(b.probabilities, vec![q.probabilities]);
    }

    let header = "name,hair,feathers,eggs,milk,airborne,aquatic,predator,toothed,backbone,breathes,venomous,fins,legs,tail,domestic,catsize,type\n";
    let opts = LoadOptions {
        id_column: Some("name".into()),
        allow_empty: true,
        ..LoadOptions::default()
    };
    let empty = Dataset::from_csv_str(header, &opts).unwrap();
    let result = batch_query(&pf, &empty, None, 1.0).unwrap();
    assert_eq!(result.rows, 0);
    assert!(result.charts.iter().all(|c| c.probabilities.is_empty() && c.layout.points.is_empty()));
}

#[test]
fn attribute_view_ranks_by_focus_and_hides_labels() {
    let ds = zoo();
    let view = ucreg_core::radviz::attribute_view(panorama(&ds), &ds, "fish", &["insect".to_string()], 1.0).unwrap();
    assert_eq!(view.ranking[0].attribute, "fins");
    let insect = view.layout.anchors.iter().find(|a| a.label == "insect").unwrap();
    assert!(!insect.visible && insect.angle.is_none());
    let by_attr = ucreg_core::radviz::attribute_view(panorama(&ds), &ds, "legs", &[], 1.0).unwrap();
    assert_eq!(by_attr.ranking[0].attribute, "legs");
    assert_eq!(by_attr.ranking[0].score, 1.0);
    assert!(ucreg_core::radviz::attribute_view(panorama(&ds), &ds, "fish", &["unicorn".to_string()], 1.0).is_err());
    assert!(ucreg_core::radviz::attribute_view(panorama(&ds), &ds, "nothing", &[], 1.0).is_err());
}
