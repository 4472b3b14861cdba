//! Proptest strategies shared by the property and acceptance suites.
#![allow(dead_code)]

use phyweb_core::context::{LightLevel, Movement, NoiseLevel};
use phyweb_core::fingerprint::{Fingerprint, Mac, NetworkKind, NetworkObservation};
use phyweb_core::ruledsl::{CompareOp, Expr};
use phyweb_core::ContextState;
use proptest::prelude::*;

pub fn mac() -> impl Strategy<Value = Mac> {
    prop::array::uniform6(any::<u8>()).prop_map(|b| {
        Mac::parse(&b.iter().map(|x| format!("{x:02X}")).collect::<Vec<_>>().join(":")).unwrap()
    })
}

pub fn kind() -> impl Strategy<Value = NetworkKind> {
    prop_oneof![Just(NetworkKind::Wifi), Just(NetworkKind::Ble), Just(NetworkKind::BtClassic)]
}

pub fn observation() -> impl Strategy<Value = NetworkObservation> {
    (".{0,12}", mac(), -120i32..=0, kind(), 0u64..2_000_000_000_000)
        .prop_map(|(ssid, mac, rssi, kind, t)| NetworkObservation::new(ssid, mac, rssi, kind, t))
}

pub fn fingerprint() -> impl Strategy<Value = Fingerprint> {
    prop::collection::vec(observation(), 0..12).prop_map(Fingerprint::from_observations)
}

fn var_name() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}".prop_filter("keyword", |s| s != "true" && s != "false")
}

fn enum_name() -> impl Strategy<Value = String> {
    "[A-Z][A-Z0-9_]{0,6}".prop_filter("keyword", |s| !matches!(s.as_str(), "AND" | "OR" | "NOT"))
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![(-200i32..200).prop_map(f64::from), (-2000i32..2000).prop_map(|n| f64::from(n) / 8.0)]
}

fn text() -> impl Strategy<Value = String> {
    r#"[a-zA-Z0-9 _:*."\\-]{0,10}"#
}

fn call() -> impl Strategy<Value = Expr> {
    prop_oneof![
        text().prop_map(|t| Expr::call("near", vec![Expr::lit_text(t)])),
        (text(), number()).prop_map(|(t, n)| Expr::call("near", vec![Expr::lit_text(t), Expr::lit_number(n)])),
        var_name().prop_map(|v| Expr::call("zone", vec![Expr::var(v)])),
        enum_name().prop_map(|v| Expr::call("zone", vec![Expr::lit_enum(v)])),
        text().prop_map(|v| Expr::call("zone", vec![Expr::lit_text(v)])),
    ]
}

fn operand() -> impl Strategy<Value = Expr> {
    prop_oneof![
        any::<bool>().prop_map(Expr::lit_bool),
        number().prop_map(Expr::lit_number),
        text().prop_map(Expr::lit_text),
        enum_name().prop_map(Expr::lit_enum),
        var_name().prop_map(Expr::var),
        call(),
    ]
}

fn op() -> impl Strategy<Value = CompareOp> {
    prop_oneof![
        Just(CompareOp::Eq),
        Just(CompareOp::Ne),
        Just(CompareOp::Lt),
        Just(CompareOp::Le),
        Just(CompareOp::Gt),
        Just(CompareOp::Ge),
    ]
}

/// Arbitrary syntactically valid trees (not necessarily well typed).
pub fn ast() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![operand(), (op(), operand(), operand()).prop_map(|(o, a, b)| Expr::compare(o, a, b))];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::and(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::or(a, b)),
        ]
    })
}

pub const ZONES: &[&str] = &["BIG_MALL", "CAFE", "home"];

/// Well-typed boolean trees over the built-in variables and a few zones.
pub fn typed_ast() -> impl Strategy<Value = Expr> {
    let movement = prop_oneof![Just("STATIONARY"), Just("WALKING"), Just("VEHICLE"), Just("UNKNOWN")];
    let light = prop_oneof![Just("DARK"), Just("DIM"), Just("NORMAL"), Just("BRIGHT"), Just("UNKNOWN")];
    let leaf = prop_oneof![
        any::<bool>().prop_map(Expr::lit_bool),
        (op(), number()).prop_map(|(o, n)| Expr::compare(o, Expr::var("noise_db"), Expr::lit_number(n))),
        (op(), number()).prop_map(|(o, n)| Expr::compare(o, Expr::var("lux"), Expr::lit_number(n * 10.0))),
        (any::<bool>(), movement).prop_map(|(eq, m)| Expr::compare(
            if eq { CompareOp::Eq } else { CompareOp::Ne },
            Expr::var("user_movement_type"),
            Expr::lit_enum(m)
        )),
        light.prop_map(|l| Expr::compare(CompareOp::Eq, Expr::var("light_level"), Expr::lit_enum(l))),
        Just(Expr::var("stable_surface")),
        Just(Expr::var("rotating")),
        prop::sample::select(ZONES).prop_map(|z| Expr::call("zone", vec![Expr::lit_text(z)])),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::not),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::and(a, b)),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::or(a, b)),
        ]
    })
}

pub fn movement() -> impl Strategy<Value = Movement> {
    prop_oneof![Just(Movement::Stationary), Just(Movement::Walking), Just(Movement::Vehicle), Just(Movement::Unknown)]
}

pub fn state() -> impl Strategy<Value = ContextState> {
    let light = prop_oneof![
        Just(LightLevel::Dark),
        Just(LightLevel::Dim),
        Just(LightLevel::Normal),
        Just(LightLevel::Bright),
        Just(LightLevel::Unknown)
    ];
    let noise = prop_oneof![Just(NoiseLevel::Quiet), Just(NoiseLevel::Moderate), Just(NoiseLevel::Loud), Just(NoiseLevel::Unknown)];
    (
        movement(),
        prop::option::of(number()),
        noise,
        prop::option::of(any::<bool>()),
        prop::option::of(any::<bool>()),
        prop::option::of(0.0f64..5000.0),
        light,
        prop::collection::vec(any::<bool>(), ZONES.len()),
    )
        .prop_map(|(movement, noise_db, noise, stable, rotating, lux, light, z)| ContextState {
            seq: 1,
            movement,
            noise_db,
            noise,
            stable_surface: stable,
            rotating,
            lux,
            light,
            zones: ZONES.iter().zip(z).map(|(k, v)| (k.to_string(), v)).collect(),
            ..Default::default()
        })
}

const TAGS: &[&str] = &["div", "span", "section", "p", "ul", "li"];

/// Small HTML documents with a mix of annotated and plain elements, plus
/// void tags, comments and text.
pub fn document() -> impl Strategy<Value = String> {
    let rule = prop_oneof![
        Just(r#" data-phyweb-when="user_movement_type == VEHICLE""#.to_string()),
        Just(r#" data-phyweb-when="noise_db &lt; -30""#.to_string()),
        Just(r#" data-phyweb-when="!rotating""#.to_string()),
        prop::sample::select(ZONES).prop_map(|z| format!(r#" data-phyweb-zone="{z}""#)),
        Just(r#" class="card""#.to_string()),
        Just(r#" class="phyweb-hidden x""#.to_string()),
        Just(String::new()),
    ];
    let leaf = prop_oneof![
        "[a-z ]{0,12}",
        Just("<br>".to_string()),
        Just("<!-- <div> -->".to_string()),
        Just("<img src=\"a.png\">".to_string()),
    ];
    let body = leaf.prop_recursive(4, 24, 4, move |inner| {
        (prop::sample::select(TAGS), rule.clone(), prop::collection::vec(inner, 0..4))
            .prop_map(|(tag, attrs, kids)| format!("<{tag}{attrs}>{}</{tag}>", kids.concat()))
    });
    (any::<bool>(), prop::collection::vec(body, 0..4)).prop_map(|(head, parts)| {
        if head {
            format!("<html><head><title>t</title></head><body>{}</body></html>", parts.concat())
        } else {
            parts.concat()
        }
    })
}
