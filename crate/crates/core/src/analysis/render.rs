//! Plain-text and CSV renderings of probe artifacts.

use std::fmt::Write as _;

use crate::env::{Layout, Position, GRID};
use crate::{Error, Result};

use super::{CapacityCurvePoint, DominanceReport, FlowMap, MessageMap};

/// Symbols render as 0-9 then a-z; vocabularies here never exceed 25.
fn symbol_glyph(symbol: usize) -> Result<char> {
    match symbol {
        0..=9 => Ok((b'0' + symbol as u8) as char),
        10..=35 => Ok((b'a' + (symbol - 10) as u8) as char),
        _ => Err(Error::Runtime(format!(
            "no glyph for symbol {symbol} (vocab too large to render)"
        ))),
    }
}

fn grid_lines(layout: &Layout, mut cell: impl FnMut(Position) -> char) -> String {
    let mut out = String::new();
    for y in 0..GRID as u8 {
        for x in 0..GRID as u8 {
            let p = Position { x, y };
            out.push(if layout.is_wall(p) {
                '#'
            } else if p == layout.start {
                ' '
            } else {
                cell(p)
            });
        }
        out.push('\n');
    }
    out
}

/// One 5x5 block per sender: symbol glyph per goal cell, `#` for walls, and
/// a blank at the start cell (never a goal).
pub fn message_map_ascii(map: &MessageMap, layout: &Layout) -> Result<String> {
    let mut out = String::new();
    for sender in 0..map.senders {
        if map.senders > 1 {
            if sender > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "sender {sender}:");
        }
        let mut err = None;
        let block = grid_lines(layout, |p| {
            let symbols = map.get(p).expect("message map covers all goal cells");
            match symbol_glyph(symbols[sender]) {
                Ok(c) => c,
                Err(e) => {
                    err = Some(e);
                    '?'
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        out.push_str(&block);
    }
    Ok(out)
}

/// Long-format CSV: one row per (cell, sender).
pub fn message_map_csv(map: &MessageMap) -> String {
    let mut out = String::from("layout,x,y,sender,symbol\n");
    for entry in &map.entries {
        for (sender, &symbol) in entry.symbols.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{sender},{symbol}",
                map.layout, entry.cell.x, entry.cell.y
            );
        }
    }
    out
}

/// Arrow glyph per free cell (`^ v < >`), `#` for walls, blank at the start.
pub fn flow_ascii(flow: &FlowMap, layout: &Layout) -> String {
    grid_lines(layout, |p| {
        flow.action_at(p)
            .expect("flow map covers all free cells")
            .glyph()
    })
}

pub fn flow_csv(flow: &FlowMap) -> String {
    let mut out = String::from("layout,x,y,action\n");
    for entry in &flow.entries {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            flow.layout,
            entry.cell.x,
            entry.cell.y,
            entry.action.as_str()
        );
    }
    out
}

pub fn capacity_csv(points: &[CapacityCurvePoint]) -> String {
    let mut out = String::from("layout,capacity,mean_normalized_return,runs\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.layout, p.capacity, p.mean_normalized_return, p.runs
        );
    }
    out
}

pub fn dominance_csv(report: &DominanceReport) -> String {
    let mut out = String::from(
        "layout,sender,scrambled_mean,ci_lo,ci_hi,drop_pct,drop_ci_lo,drop_ci_hi\n",
    );
    for e in &report.entries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            report.layout,
            e.sender,
            e.scrambled_mean,
            e.scrambled_ci.0,
            e.scrambled_ci.1,
            e.drop_pct,
            e.drop_ci_pct.0,
            e.drop_ci_pct.1
        );
    }
    out
}
