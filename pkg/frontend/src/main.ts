import { SessionApi } from './api';
import { collectElements, StudioApp } from './app';

const API_BASE = new URLSearchParams(window.location.search).get('api')
  ?? 'http://127.0.0.1:8080';

async function main(): Promise<void> {
  const api = new SessionApi(API_BASE);
  const sessionId = new URLSearchParams(window.location.search).get('session');
  await StudioApp.boot(api, collectElements(), sessionId);
}

void main().catch((err) => {
  const error = document.getElementById('error');
  if (error) {
    error.textContent = String(err);
    error.style.display = 'block';
  }
});
