//! Dependency-free HTML heatmaps for per-token attribution scores.
//!
//! One row per method, tokens as inline spans shaded green (positive) or red
//! (negative) with opacity proportional to |score| / max|score|.

use crate::model::TokenSequence;
use crate::store::EmbeddingStore;

pub struct MethodScores<'a> {
    pub method: &'a str,
    pub scores: &'a [f64],
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn token_span(token: &str, score: f64, max_abs: f64) -> String {
    let opacity = if max_abs > 0.0 { (score.abs() / max_abs).min(1.0) } else { 0.0 };
    let color = if score >= 0.0 { "0,160,0" } else { "200,0,0" };
    format!(
        "<span style=\"background-color: rgba({color},{opacity:.3}); padding: 2px 4px; \
         margin: 1px; border-radius: 3px; display: inline-block;\">{}</span>",
        escape(token)
    )
}

/// Standalone HTML document for one example. The generation-timestamp
/// comment is suppressed when `deterministic` is set so reruns are
/// byte-identical.
pub fn render_example(
    store: &EmbeddingStore,
    sequence: &TokenSequence,
    methods: &[MethodScores],
    predicted_label: &str,
    deterministic: bool,
) -> String {
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str(&format!("<title>Attribution: {}</title>\n", escape(&sequence.text)));
    if !deterministic {
        html.push_str(&format!(
            "<!-- generated {} -->\n",
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        ));
    }
    html.push_str(
        "<style>body { font-family: monospace; margin: 2em; } \
         .method { font-weight: bold; display: inline-block; width: 5em; } \
         .row { margin: 6px 0; } \
         .legend span { padding: 2px 8px; margin-right: 6px; }</style>\n",
    );
    html.push_str("</head>\n<body>\n");
    html.push_str(&format!(
        "<p>Predicted label: <b>{}</b></p>\n",
        escape(predicted_label)
    ));
    html.push_str(
        "<p class=\"legend\">Legend: \
         <span style=\"background-color: rgba(200,0,0,0.6)\">Negative</span> \
         <span>Neutral</span> \
         <span style=\"background-color: rgba(0,160,0,0.6)\">Positive</span></p>\n",
    );
    for m in methods {
        let max_abs = m.scores.iter().fold(0.0f64, |acc, s| acc.max(s.abs()));
        html.push_str("<div class=\"row\">");
        html.push_str(&format!("<span class=\"method\">{}:</span> ", escape(m.method)));
        for (&id, &score) in sequence.ids.iter().zip(m.scores) {
            html.push_str(&token_span(store.token(id), score, max_abs));
        }
        html.push_str("</div>\n");
    }
    html.push_str("</body>\n</html>\n");
    html
}
