"""Figures written next to the CSV outputs of the command-line tools."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
}


def _figure(nrows=1, ncols=1, width=6.4, height=3.6):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(nrows, ncols, figsize=(width, height), squeeze=False)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def bode(responses, path, title=None):
    """Magnitude (dB) against log frequency for ``[(label, FrequencyResponse), ...]``."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax = ax[0, 0]
        for label, resp in responses:
            w = resp.omega > 0
            ax.semilogx(resp.omega[w], resp.magnitude_db[w], label=label)
        ax.axhline(0.0, color="k", lw=0.8)
        ax.set_xlabel("frequency (rad/s)")
        ax.set_ylabel("|H(jw)| (dB)")
        if title:
            ax.set_title(title)
        ax.legend()
        _save(fig, path)


def platoon_velocities(traj, path, title=None):
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax = ax[0, 0]
        ax.plot(traj.t, traj.v0, color="tab:red", label="leader")
        cmap = plt.get_cmap("viridis", traj.n_followers + 1)
        for i in range(traj.n_followers):
            ax.plot(traj.t, traj.v[i], color=cmap(i), label=f"vehicle {i + 1}")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("velocity (m/s)")
        if title:
            ax.set_title(title)
        ax.legend(ncol=3)
        _save(fig, path)


def trajectory_fit(data, pred, path):
    """Measured (solid) against predicted (dashed) gaps and velocities."""
    with plt.rc_context(STYLE):
        fig, ax = _figure(2, 1, height=5.0)
        gap_ax, vel_ax = ax[0, 0], ax[1, 0]
        for i in range(data.n_followers):
            (line,) = gap_ax.plot(data.t, data.p[i], label=f"p{i + 1}")
            gap_ax.plot(pred.t, pred.p[i], "--", color=line.get_color())
        (line,) = vel_ax.plot(data.t, data.v0, label="v0")
        vel_ax.plot(pred.t, pred.v0, "--", color=line.get_color())
        for i in range(data.n_followers):
            (line,) = vel_ax.plot(data.t, data.v[i], label=f"v{i + 1}")
            vel_ax.plot(pred.t, pred.v[i], "--", color=line.get_color())
        gap_ax.set_ylabel("space-gap (m)")
        vel_ax.set_ylabel("velocity (m/s)")
        vel_ax.set_xlabel("time (s)")
        gap_ax.legend(ncol=4)
        vel_ax.legend(ncol=5)
        _save(fig, path)


def parameter_convergence(report, path):
    trace = np.asarray(report.param_trace)
    with plt.rc_context(STYLE):
        fig, ax = _figure(1, 3, width=8.0, height=2.8)
        for j, name in enumerate(("alpha", "beta", "tau")):
            a = ax[0, j]
            for i in range(trace.shape[1]):
                a.plot(report.iterations, trace[:, i, j], label=f"vehicle {i + 1}")
            a.set_title(name)
            a.set_xlabel("iteration")
        ax[0, 0].legend()
        _save(fig, path)


def loss_history(report, path):
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        ax = ax[0, 0]
        ax.semilogy(report.iterations, report.loss, label="total")
        ax.semilogy(report.iterations, report.psi_f, label="residual")
        ax.semilogy(report.iterations, report.psi_d, label="data")
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.legend()
        _save(fig, path)
