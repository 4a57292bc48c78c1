// Canvas drawing for the two panels: panorama-space boundary overlays and
// the bird's-eye floorplan. All coordinates come verbatim from the API.
import { bevFit, bevToCanvas, proposalColor } from "./state.js";
function columnToX(i, numColumns, width) {
    return ((i + 0.5) / numColumns) * width;
}
function drawBoundary(ctx, curve, numColumns, width, scaleY, color, lineWidth) {
    ctx.strokeStyle = color;
    ctx.lineWidth = lineWidth;
    for (const rows of [curve.floor_v, curve.ceil_v]) {
        ctx.beginPath();
        rows.forEach((v, i) => {
            const x = columnToX(i, numColumns, width);
            const y = v * scaleY;
            if (i === 0)
                ctx.moveTo(x, y);
            else
                ctx.lineTo(x, y);
        });
        ctx.stroke();
    }
}
export function drawPanorama(canvas, view, highlight, panorama) {
    const ctx = canvas.getContext("2d");
    if (!ctx)
        return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    if (panorama) {
        ctx.drawImage(panorama, 0, 0, canvas.width, canvas.height);
    }
    else {
        ctx.fillStyle = "#20242b";
        ctx.fillRect(0, 0, canvas.width, canvas.height);
        ctx.strokeStyle = "#3a4250";
        ctx.beginPath();
        ctx.moveTo(0, canvas.height / 2);
        ctx.lineTo(canvas.width, canvas.height / 2);
        ctx.stroke();
    }
    const scaleY = canvas.height / view.frame.height;
    const n = view.frame.num_columns;
    drawBoundary(ctx, view.source.boundary, n, canvas.width, scaleY, "#4f86c6", 2.5);
    view.proposals.forEach((p, idx) => {
        const color = proposalColor(idx);
        const width = p.id === highlight ? 3.5 : 1.5;
        drawBoundary(ctx, p.boundary, n, canvas.width, scaleY, color, width);
    });
}
export function drawBev(canvas, view, highlight) {
    const ctx = canvas.getContext("2d");
    if (!ctx)
        return;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#14171c";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    const sets = [view.source.bev, ...view.proposals.map((p) => p.bev)];
    const t = bevFit(sets, canvas.width, canvas.height);
    const polygon = (points, color, width) => {
        ctx.strokeStyle = color;
        ctx.lineWidth = width;
        ctx.beginPath();
        points.forEach((pt, i) => {
            const [x, y] = bevToCanvas(t, pt);
            if (i === 0)
                ctx.moveTo(x, y);
            else
                ctx.lineTo(x, y);
        });
        ctx.closePath();
        ctx.stroke();
    };
    polygon(view.source.bev, "#4f86c6", 2.5);
    view.proposals.forEach((p, idx) => {
        polygon(p.bev, proposalColor(idx), p.id === highlight ? 3.5 : 1.5);
    });
    // camera marker at the floorplan origin
    const [cx, cy] = bevToCanvas(t, [0, 0]);
    ctx.fillStyle = "#ff5964";
    ctx.beginPath();
    ctx.arc(cx, cy, 4, 0, 2 * Math.PI);
    ctx.fill();
}
