//! Gnuplot script over `log.csv`: XY track against the reference, and velocity errors.

pub fn script(title: &str) -> String {
    format!(
        r#"# gnuplot -p plot.gp
set datafile separator ","
set key autotitle columnhead
set terminal pngcairo size 1200,500
set output "plot.png"
set multiplot layout 1,2 title "{title}"

set title "XY track"
set xlabel "x (m)"
set ylabel "y (m)"
set size ratio -1
plot "log.csv" using "ref.x":"ref.y" with lines dt 2 lw 2 title "reference", \
     "" using "truth.x":"truth.y" with lines title "robot"

set title "Velocity errors"
set xlabel "t (s)"
set ylabel "error"
set size noratio
plot "log.csv" using "t":(column("ctl.v_c.v_x") - column("truth.v_x")) with lines title "v error (m/s)", \
     "" using "t":(column("ctl.v_c.omega") - column("truth.omega")) with lines title "omega error (rad/s)"

unset multiplot
"#
    )
}
