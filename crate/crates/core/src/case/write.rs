use std::fmt::Write;

use super::NetworkCase;

/// Serializes a case back to MATPOWER text. Columns the parser does not keep
/// are written with neutral values (area 1, zone 1, unlimited angle bounds).
pub fn write_matpower(case: &NetworkCase) -> String {
    let mut s = String::new();
    let name = if case.name.is_empty() {
        "case"
    } else {
        &case.name
    };
    let _ = writeln!(s, "function mpc = {name}");
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", case.base_mva);

    let _ = writeln!(s, "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin");
    let _ = writeln!(s, "mpc.bus = [");
    for b in &case.buses {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t{}\t{}\t{}\t1\t{}\t{};",
            b.id,
            b.bus_type.code(),
            b.pd,
            b.qd,
            b.gs,
            b.bs,
            b.vm,
            b.va,
            b.base_kv,
            b.vmax,
            b.vmin
        );
    }
    let _ = writeln!(s, "];");

    let _ = writeln!(s, "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin");
    let _ = writeln!(s, "mpc.gen = [");
    for g in &case.generators {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{};",
            g.bus_id,
            g.pg,
            g.qg,
            g.qmax,
            g.qmin,
            g.vg,
            g.mbase,
            u8::from(g.status),
            g.pmax,
            g.pmin
        );
    }
    let _ = writeln!(s, "];");

    let _ = writeln!(
        s,
        "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"
    );
    let _ = writeln!(s, "mpc.branch = [");
    for br in &case.branches {
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t0\t0\t{}\t{}\t{}\t-360\t360;",
            br.from_bus,
            br.to_bus,
            br.r,
            br.x,
            br.b,
            br.s_max,
            br.tap,
            br.shift,
            u8::from(br.status)
        );
    }
    let _ = writeln!(s, "];");

    let _ = writeln!(s, "mpc.gencost = [");
    for g in &case.generators {
        let coeffs: Vec<String> = g.cost.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "\t2\t0\t0\t{}\t{};", g.cost.len(), coeffs.join("\t"));
    }
    let _ = writeln!(s, "];");
    s
}
